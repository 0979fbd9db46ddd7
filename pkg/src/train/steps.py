"""
单步训练：两种模式共用同一个 RegressionNet 前向，只有网络之后的计算图不同

    supervised:   net -> H~_4pt -> L2 (对真值)
    unsupervised: net -> H~_4pt -> Tensor DLT -> 采样网格 -> 双线性采样 -> L1 光度损失
"""

from __future__ import annotations

import logging
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from datagen.generator import Sample
from nn.losses import supervised_loss
from nn.network import RegressionNet
from nn.optim import AdamState, adam_step
from nn.preprocess import stack_pairs, standardize
from utils.errors import MissingGroundTruth
from warp import PIPELINE_ERRORS, photometric_objective

logger = logging.getLogger(__name__)

Stats = Tuple[float, float]


def network_input(samples: Sequence[Sample], stats: Stats) -> np.ndarray:
    return stack_pairs([s.patch_a for s in samples], [s.patch_b for s in samples], *stats)


def _apply_update(net: RegressionNet, upstream: np.ndarray, opt_state: AdamState) -> None:
    net.backward(upstream)
    adam_step(net.params, net.grads(), opt_state)


def unsupervised_step(
    net: RegressionNet,
    batch: Sequence[Sample],
    opt_state: AdamState,
    stats: Stats,
) -> float:
    pred = net.forward(network_input(batch, stats), train_mode=True)
    mean, std = stats

    upstream = np.zeros(pred.shape, dtype=np.float64)
    losses: List[float] = []
    used: List[int] = []
    for i, s in enumerate(batch):
        try:
            res = photometric_objective(
                standardize(s.image_a, mean, std),
                s.corners_a,
                standardize(s.patch_b, mean, std),
                pred[i],
            )
        except PIPELINE_ERRORS as exc:
            logger.warning("skipping sample %d: %s", s.sample_id, exc)
            continue
        losses.append(res.loss)
        upstream[i] = res.grad_delta
        used.append(i)

    if not used:
        logger.warning("every sample in the batch was skipped; no update")
        return float("nan")

    upstream[used] /= len(used)
    _apply_update(net, upstream, opt_state)
    return float(np.mean(losses))


def supervised_step(
    net: RegressionNet,
    batch: Sequence[Sample],
    opt_state: AdamState,
    stats: Stats,
) -> float:
    missing = [s.sample_id for s in batch if s.truth is None]
    if missing:
        raise MissingGroundTruth(f"supervised training needs ground truth; missing for samples {missing[:5]}")

    pred = net.forward(network_input(batch, stats), train_mode=True)
    truth = np.stack([s.truth.flat() for s in batch])
    loss, grad = supervised_loss(pred, truth)
    _apply_update(net, grad, opt_state)
    return loss


def make_batches(count: int, batch_size: int, rng: np.random.Generator) -> Iterator[List[int]]:
    """无限循环的随机小批量；每轮重新打乱，批大小超过样本数时取全部样本"""
    size = min(batch_size, count)
    while True:
        order = rng.permutation(count)
        for start in range(0, count - size + 1, size):
            yield [int(i) for i in order[start : start + size]]
