from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from utils.errors import ShapeMismatch


@dataclass(eq=False)
class Tensor:
    """参数张量：value 保存数值 (默认 f32)，grad 以 f64 累加"""

    value: np.ndarray
    grad: Optional[np.ndarray] = field(default=None)

    def __post_init__(self) -> None:
        self.value = np.asarray(self.value)
        if self.grad is not None:
            self._check(self.grad)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.value.shape)

    def _check(self, g: np.ndarray) -> None:
        if tuple(np.shape(g)) != self.shape:
            raise ShapeMismatch(f"gradient shape {np.shape(g)} != value shape {self.shape}")

    def zero_grad(self) -> None:
        self.grad = np.zeros(self.shape, dtype=np.float64)

    def accumulate(self, g: np.ndarray) -> None:
        self._check(g)
        if self.grad is None:
            self.zero_grad()
        self.grad += g
