"""
ρ 与图像重叠率的对应关系 (Monte-Carlo 标定)

重叠率 = area(P^A ∩ 扰动后四边形) / area(P^A)，对随机偏移取平均。
标定时所有 ρ 共用同一组 [-1, 1] 随机数 (common random numbers)，
因此平均重叠率是 ρ 的连续单调函数，可以直接用 brentq 求根。
"""

from __future__ import annotations

import logging
from functools import lru_cache
from typing import Dict

import numpy as np
import shapely
from scipy.optimize import brentq
from shapely.geometry import box

from utils.errors import UnknownPreset

logger = logging.getLogger(__name__)

OVERLAP_PRESETS: Dict[str, float] = {
    "small": 0.85,
    "moderate": 0.75,
    "large": 0.65,
}
DEFAULT_MC_SAMPLES = 10_000


def _unit_offsets(n_samples: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n_samples, 4, 2))


def _overlap_fractions(offsets: np.ndarray, rho: float, patch_size: int) -> np.ndarray:
    p = float(patch_size)
    square = np.array([[0.0, 0.0], [p, 0.0], [p, p], [0.0, p]])
    quads = shapely.make_valid(shapely.polygons(square[None] + rho * offsets))
    inter = shapely.intersection(box(0.0, 0.0, p, p), quads)
    return shapely.area(inter) / (p * p)


def mean_overlap(rho: float, patch_size: int = 128, n_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0) -> float:
    if rho == 0.0:
        return 1.0
    return float(np.mean(_overlap_fractions(_unit_offsets(n_samples, seed), rho, patch_size)))


@lru_cache(maxsize=None)
def calibrate_rho(
    target: float,
    patch_size: int = 128,
    n_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
) -> float:
    """求 ρ 使平均重叠率等于 target；ρ 限制在 [0, patch_size/2)"""
    if not 0.0 < target <= 1.0:
        raise ValueError(f"overlap target must be in (0, 1], got {target}")
    if target == 1.0:
        return 0.0

    offsets = _unit_offsets(n_samples, seed)
    upper = patch_size / 2.0 * (1.0 - 1e-6)

    def residual(rho: float) -> float:
        return float(np.mean(_overlap_fractions(offsets, rho, patch_size))) - target

    if residual(upper) > 0.0:
        raise ValueError(f"overlap {target} is not reachable with rho < {patch_size / 2}")
    rho = brentq(residual, 0.0, upper, xtol=1e-3)
    logger.info("calibrated rho=%.3f for %.0f%% overlap at patch %d", rho, target * 100, patch_size)
    return float(rho)


def overlap_preset(name: str, patch_size: int = 128) -> float:
    try:
        target = OVERLAP_PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown overlap preset {name!r}; expected one of {sorted(OVERLAP_PRESETS)}") from None
    return calibrate_rho(target, patch_size)
