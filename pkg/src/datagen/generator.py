"""
合成 patch 对生成

    1. 在 I^A 中随机取边长 P 的正方形 patch (距边界至少 ρ)，得到 P^A 与角点 C^A
    2. 四个角点各加 [-ρ, ρ] 内的随机偏移，得到 C^B，H^AB = DLT(C^A, C^B)
    3. 用 (H^AB)^-1 对整幅 I^A 做 warp，再在同一位置裁出 P^B
    4. 真值 H_4pt = C^B - C^A

每个样本拥有独立的随机流 default_rng([seed, index])，并行与串行生成结果一致。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from multiprocessing import Pool
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from geom import CornerSet, FourPointDelta, corners_plus_delta, dlt_solve, invert
from nn.preprocess import to_grayscale
from utils.errors import CollinearCorners, EmptyDataset, IllConditionedSystem, ImageTooSmall
from warp import warp_image

logger = logging.getLogger(__name__)

MAX_DELTA_RETRIES = 10

ImageSource = Callable[[int, np.random.Generator], np.ndarray]


class AugmentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = Field(default=False, description="是否注入光照扰动")
    brightness_delta_max: float = Field(default=0.2, ge=0.0, le=1.0, description="亮度偏移上限 (强度范围的比例)")
    gamma_range: Tuple[float, float] = Field(default=(0.8, 1.25), description="gamma 采样区间")

    @field_validator("gamma_range")
    @classmethod
    def _check_gamma(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = value
        if lo <= 0.0 or lo > hi:
            raise ValueError("gamma_range must satisfy 0 < lo <= hi")
        return value


class GenConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    patch_size: int = Field(default=128, ge=2, description="patch 边长 (px)")
    rho: float = Field(default=32.0, ge=0.0, description="角点扰动上限 ρ (px)")
    seed: int = Field(default=0, description="数据集随机种子")
    count: int = Field(default=1, ge=1, description="样本数")
    test_fraction: float = Field(default=0.1, ge=0.0, lt=1.0, description="末尾划入测试集的样本比例")
    augment: AugmentConfig = Field(default_factory=AugmentConfig)

    @model_validator(mode="after")
    def _check_rho(self) -> "GenConfig":
        if self.rho >= self.patch_size / 2:
            raise ValueError(f"rho must be below patch_size/2 ({self.patch_size / 2}), got {self.rho}")
        return self

    @property
    def margin(self) -> int:
        return int(math.ceil(self.rho))

    def procedural_size(self) -> Tuple[int, int]:
        """程序图像尺寸 (H, W)：保留 ρ 边距后再留出 patch 的移动空间，宽高比约 4:3"""
        side = self.patch_size + 2 * self.margin
        return side + self.patch_size // 2, side + self.patch_size


@dataclass(eq=False)
class Sample:
    patch_a: np.ndarray
    patch_b: np.ndarray
    corners_a: CornerSet
    image_a: np.ndarray
    truth: Optional[FourPointDelta] = None
    sample_id: int = -1

    @property
    def origin(self) -> Tuple[int, int]:
        """P^A 左上角在 I^A 中的像素位置 (x, y)"""
        x, y = self.corners_a.pts[0]
        return int(x), int(y)

    @property
    def patch_size(self) -> int:
        return int(self.patch_a.shape[0])


def _as_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 3:
        img = to_grayscale(img)
    return img.astype(np.float32, copy=False)


def _f32_bound(rho: float) -> np.float32:
    # float32 的 ρ 可能略大于 ρ 本身
    bound = np.float32(rho)
    if bound > rho:
        bound = np.nextafter(bound, np.float32(0.0))
    return bound


def _draw_delta(rho: float, rng: np.random.Generator) -> np.ndarray:
    bound = _f32_bound(rho)
    delta = rng.uniform(-rho, rho, size=(4, 2)).astype(np.float32)
    return np.clip(delta, -bound, bound).astype(np.float64)


def generate_sample(img: np.ndarray, cfg: GenConfig, rng: np.random.Generator, sample_id: int = -1) -> Sample:
    img = _as_gray(img)
    height, width = img.shape
    p, margin = cfg.patch_size, cfg.margin
    if height < p + 2 * margin or width < p + 2 * margin:
        raise ImageTooSmall(f"image {width}x{height} is smaller than patch {p} + 2*rho margin {margin}")

    x = int(rng.integers(margin, width - p - margin + 1))
    y = int(rng.integers(margin, height - p - margin + 1))
    corners_a = CornerSet.square(x, y, p)

    last_error: Optional[Exception] = None
    for attempt in range(MAX_DELTA_RETRIES):
        delta = FourPointDelta(_draw_delta(cfg.rho, rng))
        try:
            h_ab = dlt_solve(corners_a, corners_plus_delta(corners_a, delta))
            break
        except (CollinearCorners, IllConditionedSystem) as exc:
            logger.debug("sample %d: degenerate perturbation on attempt %d: %s", sample_id, attempt + 1, exc)
            last_error = exc
    else:
        assert last_error is not None
        raise last_error

    warped = warp_image(img, invert(h_ab), width, height)[..., 0]
    return Sample(
        patch_a=img[y : y + p, x : x + p].copy(),
        patch_b=warped[y : y + p, x : x + p].astype(np.float32),
        corners_a=corners_a,
        image_a=img,
        truth=delta,
        sample_id=sample_id,
    )


def apply_illumination(patch: np.ndarray, delta: float, gamma: float) -> np.ndarray:
    """亮度偏移后做 gamma，结果截断到 [0, 1]"""
    shifted = np.clip(np.asarray(patch, dtype=np.float64) + delta, 0.0, 1.0)
    return np.clip(shifted**gamma, 0.0, 1.0).astype(np.float32)


def augment_illumination(s: Sample, cfg: AugmentConfig, rng: np.random.Generator) -> Sample:
    if not cfg.enabled:
        return s

    def draw() -> Tuple[float, float]:
        delta = float(rng.uniform(-cfg.brightness_delta_max, cfg.brightness_delta_max))
        gamma = float(rng.uniform(*cfg.gamma_range))
        return delta, gamma

    delta_a, gamma_a = draw()
    delta_b, gamma_b = draw()
    # P^A 仍是 I^A 的裁剪，两者施加同一扰动
    return replace(
        s,
        patch_a=apply_illumination(s.patch_a, delta_a, gamma_a),
        image_a=apply_illumination(s.image_a, delta_a, gamma_a),
        patch_b=apply_illumination(s.patch_b, delta_b, gamma_b),
    )


def dataset_stats(samples: Sequence[Sample]) -> Tuple[float, float]:
    """训练集所有 patch 像素的总体均值与标准差 (两遍法)"""
    if not samples:
        raise EmptyDataset("cannot compute statistics of an empty dataset")
    patches = [np.asarray(p, dtype=np.float64).ravel() for s in samples for p in (s.patch_a, s.patch_b)]
    pixels = np.concatenate(patches)
    mean = float(pixels.mean())
    std = float(np.sqrt(np.mean((pixels - mean) ** 2)))
    return mean, std


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _generate_one(args: Tuple[int, ImageSource, GenConfig]) -> Sample:
    index, source, cfg = args
    rng = sample_rng(cfg.seed, index)
    img = source(index, rng)
    sample = generate_sample(img, cfg, rng, sample_id=index)
    return augment_illumination(sample, cfg.augment, rng)


def generate_dataset(source: ImageSource, cfg: GenConfig, workers: int = 1) -> List[Sample]:
    jobs = [(index, source, cfg) for index in range(cfg.count)]
    logger.info("generating %d samples (patch=%d rho=%.3f workers=%d)", cfg.count, cfg.patch_size, cfg.rho, workers)
    if workers <= 1 or cfg.count == 1:
        return [_generate_one(job) for job in jobs]

    with Pool(processes=workers) as pool:
        return pool.map(_generate_one, jobs, chunksize=max(1, cfg.count // (4 * workers)))


def split_ids(count: int, test_fraction: float) -> Tuple[List[int], List[int]]:
    """末尾 test_fraction 的样本构成测试集；样本数 >= 2 时两侧都非空"""
    n_test = int(round(count * test_fraction))
    if test_fraction > 0 and count >= 2:
        n_test = min(max(n_test, 1), count - 1)
    n_train = count - n_test
    return list(range(n_train)), list(range(n_train, count))
