"""
评测用的估计器：输入一个样本，输出预测的 H_4pt 与附加信息
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Protocol, Tuple

import numpy as np

from datagen.generator import Sample
from evaluation.aligner import DEFAULT_ALIGN_ITERATIONS, DEFAULT_ALIGN_LR, align_pair
from geom import FourPointDelta
from nn.checkpoint import load_checkpoint
from nn.network import RegressionNet
from nn.preprocess import stack_pairs
from utils.errors import CheckpointError, UsageError

Estimate = Tuple[FourPointDelta, Dict[str, Any]]


class Estimator(Protocol):
    name: str

    def estimate(self, sample: Sample) -> Estimate: ...


@dataclass
class ZeroDeltaEstimator:
    """恒输出零偏移 (单位单应)"""

    name: str = "zero"

    def estimate(self, sample: Sample) -> Estimate:
        return FourPointDelta.zeros(), {}


@dataclass
class NetworkEstimator:
    net: RegressionNet
    stats: Tuple[float, float]
    name: str = "net"

    @classmethod
    def from_checkpoint(cls, path) -> "NetworkEstimator":
        net, extra = load_checkpoint(path)
        if "mean" not in extra or "std" not in extra:
            raise CheckpointError(f"checkpoint {path} carries no standardization statistics")
        return cls(net=net, stats=(float(extra["mean"]), float(extra["std"])), name=f"net:{path}")

    def estimate(self, sample: Sample) -> Estimate:
        x = stack_pairs([sample.patch_a], [sample.patch_b], *self.stats)
        out = self.net.forward(x, train_mode=False)
        return FourPointDelta(np.asarray(out[0], dtype=np.float64)), {}


@dataclass
class DirectAlignEstimator:
    iterations: int = DEFAULT_ALIGN_ITERATIONS
    lr: float = DEFAULT_ALIGN_LR
    name: str = "align"

    def estimate(self, sample: Sample) -> Estimate:
        res = align_pair(sample.image_a, sample.corners_a, sample.patch_b, self.iterations, self.lr)
        info = {
            "iterations": res.iterations,
            "best_iteration": res.best_iteration,
            "initial_loss": res.initial_loss,
            "final_loss": res.loss,
            "aborted": res.aborted,
        }
        return res.delta, info


def parse_estimator(name: str, iterations: int = DEFAULT_ALIGN_ITERATIONS, lr: float = DEFAULT_ALIGN_LR) -> Estimator:
    """CLI 形式：zero | align | net:<checkpoint>"""
    if name == "zero":
        return ZeroDeltaEstimator()
    if name == "align":
        return DirectAlignEstimator(iterations=iterations, lr=lr)
    if name.startswith("net:") and len(name) > 4:
        return NetworkEstimator.from_checkpoint(name[4:])
    raise UsageError(f"unknown estimator {name!r}; expected zero, align or net:<checkpoint>")
