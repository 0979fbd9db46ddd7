from __future__ import annotations

from typing import Sequence

import numpy as np

from utils.errors import DegenerateStd, ShapeMismatch

STD_EPS = 1e-8
# Rec. 601 luma
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def standardize(img: np.ndarray, mean: float, std: float) -> np.ndarray:
    if std <= STD_EPS:
        raise DegenerateStd(f"standard deviation {std} is too small to standardize")
    return (np.asarray(img, dtype=np.float64) - mean) / std


def destandardize(img: np.ndarray, mean: float, std: float) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) * std + mean


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """(H, W, 3) RGB -> (H, W)"""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 2:
        return rgb
    if rgb.shape[-1] == 1:
        return rgb[..., 0]
    return rgb[..., :3] @ LUMA_WEIGHTS


def stack_pairs(
    patches_a: Sequence[np.ndarray],
    patches_b: Sequence[np.ndarray],
    mean: float,
    std: float,
) -> np.ndarray:
    """标准化后按通道堆叠 -> (N, P, P, 2) float32"""
    if len(patches_a) != len(patches_b) or not patches_a:
        raise ShapeMismatch(f"need equally many A/B patches, got {len(patches_a)} and {len(patches_b)}")
    a = standardize(np.stack(patches_a), mean, std)
    b = standardize(np.stack(patches_b), mean, std)
    if a.shape != b.shape or a.ndim != 3:
        raise ShapeMismatch(f"patch stacks must be N x P x P, got {a.shape} and {b.shape}")
    return np.stack([a, b], axis=-1).astype(np.float32)
