from __future__ import annotations

import math
from typing import Any, Dict, List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from geom import FourPointDelta

PERCENTILES = (10, 20, 30, 40, 50, 60, 70, 80, 90)


def fourpt_rmse(pred: FourPointDelta, truth: FourPointDelta, per_corner: bool = False) -> float:
    """
    8 个坐标残差的 RMSE: sqrt(sum(e^2) / 8)
    per_corner=True 时按 4 个角点的位移长度计算: sqrt(sum(|e_k|^2) / 4)，相差 sqrt(2) 倍
    """
    err = pred.d - truth.d
    denom = 4.0 if per_corner else 8.0
    return float(np.sqrt(np.sum(err * err) / denom))


def nearest_rank(values: Sequence[float], q: float) -> float:
    """nearest-rank 百分位；q 取 [0, 100]"""
    if not values:
        raise ValueError("nearest_rank of an empty sequence")
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return float(ordered[rank - 1])


def percentile_table(values: Sequence[float]) -> Dict[str, float]:
    return {f"p{q}": nearest_rank(values, q) for q in PERCENTILES}


class EvalResult(BaseModel):
    """单个估计器在一个划分上的评测结果；失败样本的 rmse 记为 +inf"""

    model_config = ConfigDict(ser_json_inf_nan="strings")

    estimator: str
    sample_ids: List[int] = Field(default_factory=list)
    rmse: List[float] = Field(default_factory=list)
    extra: List[Dict[str, Any]] = Field(default_factory=list, description="逐样本附加信息，如迭代次数")
    percentiles: Dict[str, float] = Field(default_factory=dict)
    mean: float = math.inf
    median: float = math.inf
    failures: int = 0
    per_corner: bool = False

    @property
    def count(self) -> int:
        return len(self.rmse)

    @classmethod
    def build(
        cls,
        estimator: str,
        sample_ids: Sequence[int],
        rmse: Sequence[float],
        extra: Sequence[Dict[str, Any]],
        per_corner: bool = False,
    ) -> "EvalResult":
        values = [float(r) for r in rmse]
        finite = [r for r in values if math.isfinite(r)]
        return cls(
            estimator=estimator,
            sample_ids=list(sample_ids),
            rmse=values,
            extra=list(extra),
            percentiles=percentile_table(values),
            mean=float(np.mean(finite)) if finite else math.inf,
            median=nearest_rank(values, 50),
            failures=len(values) - len(finite),
            per_corner=per_corner,
        )

    def summary(self) -> Dict[str, Any]:
        return {
            "estimator": self.estimator,
            "count": self.count,
            "failures": self.failures,
            "mean_rmse": self.mean,
            "median_rmse": self.median,
            "percentiles": self.percentiles,
            "per_corner": self.per_corner,
        }
