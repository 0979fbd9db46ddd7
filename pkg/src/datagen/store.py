"""
数据集落盘格式

    <root>/manifest.json          配置、划分、统计量、格式版本 (UTF-8 JSON)
    <root>/records/<id>.bin       单个样本

record 布局 (little-endian):
    magic "HGSAMPLE" | u32 version | u8 has_truth
    array x { corners, [truth], patch_a, patch_b, image_a }，每个 array 为
        u8 ndim | ndim x u32 | float32 payload
"""

from __future__ import annotations

import io
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from datagen.generator import GenConfig, ImageSource, Sample, dataset_stats, generate_dataset, split_ids
from geom import CornerSet, FourPointDelta
from utils.errors import DatasetFormatError, EmptySplit

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
RECORD_MAGIC = b"HGSAMPLE"
_F32 = np.dtype("<f4")


def _write_array(buf: io.BytesIO, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype=_F32)
    buf.write(struct.pack("<B", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(arr.tobytes())


def encode_record(s: Sample) -> bytes:
    buf = io.BytesIO()
    buf.write(RECORD_MAGIC)
    buf.write(struct.pack("<IB", FORMAT_VERSION, 1 if s.truth is not None else 0))
    _write_array(buf, s.corners_a.pts)
    if s.truth is not None:
        _write_array(buf, s.truth.d)
    for arr in (s.patch_a, s.patch_b, s.image_a):
        _write_array(buf, arr)
    return buf.getvalue()


def decode_record(data: bytes, sample_id: int = -1, source: str = "<bytes>") -> Sample:
    pos = 0

    def take(size: int) -> bytes:
        nonlocal pos
        if pos + size > len(data):
            raise DatasetFormatError(f"record {source} is truncated")
        chunk = data[pos : pos + size]
        pos += size
        return chunk

    def read_array() -> np.ndarray:
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(take(count * _F32.itemsize), dtype=_F32).reshape(shape).astype(np.float32)

    if take(len(RECORD_MAGIC)) != RECORD_MAGIC:
        raise DatasetFormatError(f"record {source} has a bad magic string")
    version, has_truth = struct.unpack("<IB", take(5))
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"record {source} has unsupported version {version}")

    try:
        corners = CornerSet(read_array())
        truth = FourPointDelta(read_array()) if has_truth else None
    except ValueError as exc:
        raise DatasetFormatError(f"record {source} has malformed geometry: {exc}") from exc
    patch_a, patch_b, image_a = read_array(), read_array(), read_array()
    if pos != len(data):
        raise DatasetFormatError(f"record {source} has trailing bytes")
    if patch_a.shape != patch_b.shape or patch_a.ndim != 2 or image_a.ndim != 2:
        raise DatasetFormatError(f"record {source} has inconsistent patch shapes")
    return Sample(
        patch_a=patch_a,
        patch_b=patch_b,
        corners_a=corners,
        image_a=image_a,
        truth=truth,
        sample_id=sample_id,
    )


class DatasetStore:
    """manifest + records 目录的读写"""

    def __init__(self, root: Path):
        self.root = Path(root)
        self._manifest: Optional[Dict[str, Any]] = None

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    @property
    def records_dir(self) -> Path:
        return self.root / "records"

    def record_path(self, sample_id: int) -> Path:
        return self.records_dir / f"{sample_id:06d}.bin"

    def write(
        self,
        samples: Sequence[Sample],
        cfg: GenConfig,
        splits: Dict[str, List[int]],
        stats: Tuple[float, float],
        source: Optional[Dict[str, Any]] = None,
    ) -> Path:
        self.records_dir.mkdir(parents=True, exist_ok=True)
        for s in samples:
            self.record_path(s.sample_id).write_bytes(encode_record(s))

        manifest = {
            "format_version": FORMAT_VERSION,
            "config": cfg.model_dump(mode="json"),
            "source": source or {},
            "count": len(samples),
            "has_truth": all(s.truth is not None for s in samples),
            "splits": splits,
            "stats": {"mean": stats[0], "std": stats[1]},
        }
        self.manifest_path.write_text(
            json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True), encoding="utf-8"
        )
        self._manifest = manifest
        logger.info("wrote %d samples to %s", len(samples), self.root)
        return self.manifest_path

    @property
    def manifest(self) -> Dict[str, Any]:
        if self._manifest is None:
            if not self.manifest_path.exists():
                raise DatasetFormatError(f"no dataset manifest at {self.manifest_path}")
            try:
                manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))
            except ValueError as exc:
                raise DatasetFormatError(f"invalid manifest {self.manifest_path}: {exc}") from exc
            if manifest.get("format_version") != FORMAT_VERSION:
                raise DatasetFormatError(f"unsupported dataset format version {manifest.get('format_version')}")
            for key in ("config", "splits", "stats"):
                if key not in manifest:
                    raise DatasetFormatError(f"manifest is missing {key!r}")
            self._manifest = manifest
        return self._manifest

    @property
    def config(self) -> GenConfig:
        return GenConfig(**self.manifest["config"])

    @property
    def stats(self) -> Tuple[float, float]:
        stats = self.manifest["stats"]
        return float(stats["mean"]), float(stats["std"])

    def split_ids(self, split: str) -> List[int]:
        splits = self.manifest["splits"]
        if split == "all":
            return sorted(i for ids in splits.values() for i in ids)
        if split not in splits:
            raise DatasetFormatError(f"unknown split {split!r}; available: {sorted(splits)}")
        return list(splits[split])

    def read(self, sample_id: int) -> Sample:
        path = self.record_path(sample_id)
        if not path.exists():
            raise DatasetFormatError(f"missing record {path}")
        return decode_record(path.read_bytes(), sample_id=sample_id, source=str(path))

    def load_split(self, split: str) -> List[Sample]:
        ids = self.split_ids(split)
        if not ids:
            raise EmptySplit(f"split {split!r} of {self.root} is empty")
        return [self.read(i) for i in ids]


def build_dataset(source: ImageSource, cfg: GenConfig, out_dir: Path, workers: int = 1) -> DatasetStore:
    """生成、划分、统计 (仅训练集) 并写盘"""
    samples = generate_dataset(source, cfg, workers)
    train_ids, test_ids = split_ids(cfg.count, cfg.test_fraction)
    stats = dataset_stats([samples[i] for i in train_ids])
    describe = getattr(source, "describe", None)
    store = DatasetStore(out_dir)
    store.write(
        samples,
        cfg,
        {"train": train_ids, "test": test_ids},
        stats,
        source=describe() if callable(describe) else None,
    )
    return store
