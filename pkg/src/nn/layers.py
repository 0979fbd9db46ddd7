"""
回归网络用到的层：conv3x3 (same padding) / relu / maxpool2x2 / flatten / fc / dropout
数据布局 NHWC；前向以参数 dtype 计算，反向梯度统一为 f64
"""

from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np
from scipy.stats import truncnorm

from nn.tensor import Tensor
from utils.errors import NoForwardState, ShapeMismatch


def truncated_normal(shape: Tuple[int, ...], std: float, rng: np.random.Generator) -> np.ndarray:
    return truncnorm.rvs(-2.0, 2.0, scale=std, size=shape, random_state=rng)


class Layer:
    name: str = ""

    def __init__(self) -> None:
        self.params: Dict[str, Tensor] = {}
        self._cache: Optional[tuple] = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _pop_cache(self) -> tuple:
        if self._cache is None:
            raise NoForwardState(f"layer {self.name or type(self).__name__} has no forward state")
        cache, self._cache = self._cache, None
        return cache


class Conv2d(Layer):
    def __init__(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        init_std: float,
        dtype: np.dtype,
    ) -> None:
        super().__init__()
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.weight = Tensor(truncated_normal((3, 3, in_channels, out_channels), init_std, rng).astype(dtype))
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype))
        self.params = {f"{name}.weight": self.weight, f"{name}.bias": self.bias}

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.ndim != 4 or x.shape[-1] != self.in_channels:
            raise ShapeMismatch(f"{self.name}: expected N x H x W x {self.in_channels}, got {x.shape}")
        n, h, w, _ = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        w_val = self.weight.value
        out = np.zeros((n, h, w, self.out_channels), dtype=np.result_type(x, w_val))
        for dy in range(3):
            for dx in range(3):
                out += xp[:, dy : dy + h, dx : dx + w, :] @ w_val[dy, dx]
        out += self.bias.value
        self._cache = (xp, (h, w))
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        xp, (h, w) = self._pop_cache()
        grad = np.asarray(grad, dtype=np.float64)
        xp64 = xp.astype(np.float64)
        w64 = self.weight.value.astype(np.float64)

        grad_w = np.empty(w64.shape)
        grad_xp = np.zeros(xp.shape, dtype=np.float64)
        for dy in range(3):
            for dx in range(3):
                window = xp64[:, dy : dy + h, dx : dx + w, :]
                grad_w[dy, dx] = np.tensordot(window, grad, axes=([0, 1, 2], [0, 1, 2]))
                grad_xp[:, dy : dy + h, dx : dx + w, :] += grad @ w64[dy, dx].T

        self.weight.accumulate(grad_w)
        self.bias.accumulate(grad.sum(axis=(0, 1, 2)))
        return grad_xp[:, 1:-1, 1:-1, :]


class ReLU(Layer):
    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        mask = x > 0
        self._cache = (mask,)
        return x * mask

    def backward(self, grad: np.ndarray) -> np.ndarray:
        (mask,) = self._pop_cache()
        return grad * mask


class MaxPool2d(Layer):
    """2x2 / stride 2；奇数边长时丢弃最后一行/列"""

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        if h2 == 0 or w2 == 0:
            raise ShapeMismatch(f"feature map {h}x{w} too small to pool")
        windows = (
            x[:, : 2 * h2, : 2 * w2, :]
            .reshape(n, h2, 2, w2, 2, c)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, h2, w2, c, 4)
        )
        idx = np.argmax(windows, axis=-1)[..., None]
        self._cache = (idx, x.shape)
        return np.take_along_axis(windows, idx, axis=-1)[..., 0]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        idx, shape = self._pop_cache()
        n, h, w, c = shape
        h2, w2 = h // 2, w // 2
        windows = np.zeros((n, h2, w2, c, 4), dtype=np.float64)
        np.put_along_axis(windows, idx, np.asarray(grad, dtype=np.float64)[..., None], axis=-1)
        dense = windows.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * h2, 2 * w2, c)
        out = np.zeros(shape, dtype=np.float64)
        out[:, : 2 * h2, : 2 * w2, :] = dense
        return out


class Flatten(Layer):
    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._cache = (x.shape,)
        return x.reshape(x.shape[0], -1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        (shape,) = self._pop_cache()
        return grad.reshape(shape)


class Linear(Layer):
    def __init__(
        self,
        name: str,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        init_std: float,
        dtype: np.dtype,
        zero_init: bool = False,
    ) -> None:
        super().__init__()
        self.name = name
        self.in_features = in_features
        if zero_init:
            weight = np.zeros((in_features, out_features))
        else:
            weight = truncated_normal((in_features, out_features), init_std, rng)
        self.weight = Tensor(weight.astype(dtype))
        self.bias = Tensor(np.zeros(out_features, dtype=dtype))
        self.params = {f"{name}.weight": self.weight, f"{name}.bias": self.bias}

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatch(f"{self.name}: expected N x {self.in_features}, got {x.shape}")
        self._cache = (x,)
        return x @ self.weight.value + self.bias.value

    def backward(self, grad: np.ndarray) -> np.ndarray:
        (x,) = self._pop_cache()
        grad = np.asarray(grad, dtype=np.float64)
        self.weight.accumulate(x.astype(np.float64).T @ grad)
        self.bias.accumulate(grad.sum(axis=0))
        return grad @ self.weight.value.astype(np.float64).T


class Dropout(Layer):
    """inverted dropout；掩码来自网络持有的 rng，固定 seed 可复现"""

    def __init__(self, rate: float, rng: np.random.Generator) -> None:
        super().__init__()
        self.rate = rate
        self.rng = rng

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if not train or self.rate <= 0.0:
            self._cache = (None,)
            return x
        keep = 1.0 - self.rate
        mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / np.asarray(keep, dtype=x.dtype)
        self._cache = (mask,)
        return x * mask

    def backward(self, grad: np.ndarray) -> np.ndarray:
        (mask,) = self._pop_cache()
        return grad if mask is None else grad * mask
