"""
网络 checkpoint 的二进制容器

    magic "HOMOGCKP" | u32 format_version | u32 config_len | config (UTF-8 JSON)
    u32 n_params | n_params x { u16 name_len | name | u8 dtype_tag | u8 ndim | ndim x u32 | payload }

所有整数与数据均为 little-endian；config 中包含 NetConfig 与附加信息 (标准化统计量等)
"""

from __future__ import annotations

import io
import json
import os
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from nn.network import NetConfig, RegressionNet
from utils.errors import CheckpointError, ShapeMismatch

MAGIC = b"HOMOGCKP"
FORMAT_VERSION = 1

_DTYPE_TAGS = {np.dtype("float32"): 1, np.dtype("float64"): 2}
_TAG_DTYPES = {tag: np.dtype(dt).newbyteorder("<") for dt, tag in _DTYPE_TAGS.items()}


def _pack_params(buf: io.BytesIO, state: Dict[str, np.ndarray]) -> None:
    buf.write(struct.pack("<I", len(state)))
    for name, value in state.items():
        value = np.ascontiguousarray(value)
        tag = _DTYPE_TAGS.get(value.dtype)
        if tag is None:
            raise CheckpointError(f"unsupported dtype {value.dtype} for parameter {name}")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<BB", tag, value.ndim))
        buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
        buf.write(value.astype(_TAG_DTYPES[tag], copy=False).tobytes())


def save_checkpoint(path: Path, net: RegressionNet, extra: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    config = {"net": net.config.model_dump(), "extra": extra or {}}
    config_bytes = json.dumps(config, ensure_ascii=False, sort_keys=True).encode("utf-8")

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(config_bytes)))
    buf.write(config_bytes)
    _pack_params(buf, net.state_dict())

    tmp_path = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp_path.write_bytes(buf.getvalue())
        os.replace(tmp_path, path)
    except OSError as exc:
        tmp_path.unlink(missing_ok=True)
        raise CheckpointError(f"failed to write checkpoint {path}: {exc}") from exc
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise CheckpointError(f"checkpoint {self.path} is truncated")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: Path) -> Tuple[RegressionNet, Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    reader = _Reader(path.read_bytes(), path)

    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path} is not a homography checkpoint")
    version, config_len = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")

    try:
        config = json.loads(reader.take(config_len).decode("utf-8"))
        net = RegressionNet(NetConfig(**config["net"]))
    except (ValueError, KeyError, ValidationError) as exc:
        raise CheckpointError(f"invalid checkpoint config in {path}: {exc}") from exc

    (count,) = reader.unpack("<I")
    state: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        tag, ndim = reader.unpack("<BB")
        if tag not in _TAG_DTYPES:
            raise CheckpointError(f"unknown dtype tag {tag} for parameter {name}")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        dtype = _TAG_DTYPES[tag]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        state[name] = np.frombuffer(reader.take(nbytes), dtype=dtype).reshape(shape)

    if reader.pos != len(reader.data):
        raise CheckpointError(f"trailing bytes in checkpoint {path}")

    try:
        net.load_state_dict(state)
    except ShapeMismatch as exc:
        raise CheckpointError(f"checkpoint {path} does not match its config: {exc}") from exc
    return net, config.get("extra", {})
