from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Union

import numpy as np

from nn.tensor import Tensor
from utils.errors import ShapeMismatch

ParamLike = Union[Tensor, np.ndarray]


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, ParamLike],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> Mapping[str, ParamLike]:
    """带偏差修正的 Adam；矩估计为 f64，参数按原 dtype 原地更新"""
    if set(params) != set(grads):
        raise ShapeMismatch(f"parameter and gradient names differ: {sorted(set(params) ^ set(grads))}")

    state.t += 1
    bias1 = 1.0 - state.beta1 ** state.t
    bias2 = 1.0 - state.beta2 ** state.t

    for name, param in params.items():
        value = param.value if isinstance(param, Tensor) else param
        grad = np.asarray(grads[name], dtype=np.float64)
        if grad.shape != value.shape:
            raise ShapeMismatch(f"{name}: gradient shape {grad.shape} != parameter shape {value.shape}")

        m = state.m.get(name)
        v = state.v.get(name)
        if m is None or v is None:
            m = np.zeros(value.shape, dtype=np.float64)
            v = np.zeros(value.shape, dtype=np.float64)
        elif m.shape != value.shape:
            raise ShapeMismatch(f"{name}: moment shape {m.shape} != parameter shape {value.shape}")

        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v

        step = state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        value[...] = (value.astype(np.float64) - step).astype(value.dtype)

    return params
