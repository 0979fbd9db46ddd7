from __future__ import annotations

from typing import Tuple

import numpy as np

from utils.errors import ShapeMismatch


def supervised_loss(pred: np.ndarray, truth: np.ndarray) -> Tuple[float, np.ndarray]:
    """L_H = mean_batch( 1/2 * ||pred - truth||^2 )，返回 (loss, dL/dpred)"""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 2:
        raise ShapeMismatch(f"pred {pred.shape} and truth {truth.shape} must be equal N x 8 arrays")
    n = pred.shape[0]
    diff = pred - truth
    loss = 0.5 * float(np.sum(diff * diff)) / n
    return loss, diff / n


def photometric_loss(warped_a: np.ndarray, patch_b: np.ndarray) -> Tuple[float, np.ndarray]:
    """平均 L1 光度误差；差值恰为 0 处次梯度取 0"""
    warped_a = np.asarray(warped_a, dtype=np.float64)
    patch_b = np.asarray(patch_b, dtype=np.float64)
    if warped_a.shape != patch_b.shape:
        raise ShapeMismatch(f"warped patch {warped_a.shape} and target patch {patch_b.shape} differ")
    diff = warped_a - patch_b
    count = diff.size
    return float(np.mean(np.abs(diff))), np.sign(diff) / count
