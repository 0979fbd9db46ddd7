"""
无网络的直接光度配准：以 8 个角点偏移为参数，经 Tensor DLT 与可微 warp 做梯度下降 (Adam)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from geom import CornerSet, FourPointDelta
from nn.optim import AdamState, adam_step
from warp import PIPELINE_ERRORS, photometric_objective

logger = logging.getLogger(__name__)

DEFAULT_ALIGN_ITERATIONS = 500
DEFAULT_ALIGN_LR = 0.05


@dataclass
class AlignResult:
    delta: FourPointDelta
    loss: float
    initial_loss: float
    iterations: int
    best_iteration: int
    best_losses: List[float] = field(default_factory=list)
    aborted: bool = False


def align_pair(
    image_a: np.ndarray,
    corners_a: CornerSet,
    patch_b: np.ndarray,
    iterations: int = DEFAULT_ALIGN_ITERATIONS,
    lr: float = DEFAULT_ALIGN_LR,
    center: bool = True,
) -> AlignResult:
    """
    从零偏移出发；返回损失最小的迭代点，best_losses 为逐步的历史最优损失

    默认使用去均值的 L1，P^B 整体变亮或变暗不会把配准拉向亮区
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")

    delta = np.zeros(8)
    state = AdamState(lr=lr)
    best_delta = delta.copy()
    best_loss = np.inf
    best_iteration = 0
    initial_loss = np.nan
    history: List[float] = []
    aborted = False

    for it in range(iterations):
        try:
            res = photometric_objective(image_a, corners_a, patch_b, delta, center=center)
        except PIPELINE_ERRORS as exc:
            if it == 0:
                raise
            logger.debug("direct alignment stopped at iteration %d: %s", it, exc)
            aborted = True
            break

        if it == 0:
            initial_loss = res.loss
        if res.loss < best_loss:
            best_loss, best_delta, best_iteration = res.loss, delta.copy(), it
        history.append(float(best_loss))

        if not np.any(res.grad_delta):
            break
        adam_step({"delta": delta}, {"delta": res.grad_delta}, state)

    return AlignResult(
        delta=FourPointDelta(best_delta),
        loss=float(best_loss),
        initial_loss=float(initial_loss),
        iterations=len(history),
        best_iteration=best_iteration,
        best_losses=history,
        aborted=aborted,
    )


def direct_align(
    image_a: np.ndarray,
    corners_a: CornerSet,
    patch_b: np.ndarray,
    iterations: int = DEFAULT_ALIGN_ITERATIONS,
    lr: float = DEFAULT_ALIGN_LR,
    center: bool = True,
) -> FourPointDelta:
    return align_pair(image_a, corners_a, patch_b, iterations, lr, center).delta
