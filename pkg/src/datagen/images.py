"""
图像来源：用户提供的照片目录 (PNG / PGM)，或程序生成的平滑多尺度噪声图

所有图像在内部统一为 float32、取值 [0, 1]；灰度图形状 (H, W)，彩色图为 RGB 顺序的 (H, W, 3)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Union

import cv2
import numpy as np

from nn.preprocess import to_grayscale
from utils.errors import EmptyDataset, ImageIOError

if TYPE_CHECKING:
    from datagen.generator import GenConfig

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")


def procedural_image(
    height: int,
    width: int,
    rng: np.random.Generator,
    octaves: int = 4,
    min_feature_px: int = 8,
) -> np.ndarray:
    """
    多尺度随机噪声叠加后模糊，得到无需外部数据的平滑纹理

    最细一层的格子不小于 min_feature_px，光度误差的吸引域随之不小于约半个格子
    """
    canvas = np.zeros((height, width), dtype=np.float32)
    amplitude = 1.0
    finest = max(2, min(height, width) // min_feature_px)
    for octave in range(octaves):
        cells = min(4 * 2**octave, finest)
        coarse = rng.random((cells, cells)).astype(np.float32)
        canvas += amplitude * cv2.resize(coarse, (width, height), interpolation=cv2.INTER_CUBIC)
        amplitude *= 0.5

    sigma = max(2.0, min(height, width) / 64.0)
    canvas = cv2.GaussianBlur(canvas, (0, 0), sigmaX=sigma)
    lo, hi = float(canvas.min()), float(canvas.max())
    if hi - lo < 1e-6:
        return np.full((height, width), 0.5, dtype=np.float32)
    return ((canvas - lo) / (hi - lo)).astype(np.float32)


def _to_unit_range(raw: np.ndarray) -> np.ndarray:
    if raw.dtype == np.uint8:
        return raw.astype(np.float32) / 255.0
    if raw.dtype == np.uint16:
        return raw.astype(np.float32) / 65535.0
    return np.clip(raw.astype(np.float32), 0.0, 1.0)


def load_image(path: Path, grayscale: bool = True) -> np.ndarray:
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageIOError(f"cannot read image: {path}")

    img = _to_unit_range(raw)
    if img.ndim == 3:
        # OpenCV 读出的是 BGR(A)
        img = cv2.cvtColor(img[..., :3], cv2.COLOR_BGR2RGB)
        if grayscale:
            img = to_grayscale(img).astype(np.float32)
    return img


def save_image(path: Path, img: np.ndarray) -> Path:
    path = Path(path)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    out = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    if out.ndim == 3:
        out = cv2.cvtColor(out, cv2.COLOR_RGB2BGR)

    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), out):
        raise ImageIOError(f"cannot write image: {path}")
    return path


def list_images(src_dir: Path) -> List[Path]:
    src_dir = Path(src_dir)
    if not src_dir.is_dir():
        raise ImageIOError(f"source directory not found: {src_dir}")
    paths = sorted(p for p in src_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise EmptyDataset(f"no PNG/PGM images in {src_dir}")
    return paths


@dataclass
class ProceduralSource:
    """每个样本一张新的程序图像，由该样本自己的 rng 生成"""

    height: int
    width: int

    def __call__(self, index: int, rng: np.random.Generator) -> np.ndarray:
        return procedural_image(self.height, self.width, rng)

    def describe(self) -> Dict[str, object]:
        return {"kind": "procedural", "size": [self.height, self.width]}


@dataclass
class DirectorySource:
    """按样本序号循环使用目录中的图像"""

    paths: Sequence[Path]
    _cache: Dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @classmethod
    def from_dir(cls, src_dir: Path) -> "DirectorySource":
        paths = list_images(src_dir)
        logger.info("found %d source images in %s", len(paths), src_dir)
        return cls(paths=paths)

    def __call__(self, index: int, rng: np.random.Generator) -> np.ndarray:
        slot = index % len(self.paths)
        if slot not in self._cache:
            self._cache[slot] = load_image(self.paths[slot])
        return self._cache[slot]

    def describe(self) -> Dict[str, object]:
        return {"kind": "directory", "paths": [str(p) for p in self.paths]}


def make_source(cfg: "GenConfig", src_dir: Optional[Path] = None) -> Union[ProceduralSource, DirectorySource]:
    if src_dir is not None:
        return DirectorySource.from_dir(src_dir)
    return ProceduralSource(*cfg.procedural_size())


def source_from_description(desc: Dict[str, object], cfg: "GenConfig") -> Union[ProceduralSource, DirectorySource]:
    """按 manifest 中记录的来源重建图像源；程序图像的尺寸随 cfg (ρ) 重新计算"""
    if desc.get("kind") == "directory":
        paths = [Path(p) for p in desc.get("paths", [])]
        if not paths:
            raise EmptyDataset("dataset manifest lists no source images")
        return DirectorySource(paths=paths)
    return ProceduralSource(*cfg.procedural_size())
