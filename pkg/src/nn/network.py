"""
回归网络：输入 P^A / P^B 堆叠的 2 通道 patch，输出 8 个数 (H~_4pt)
监督与无监督两种模式共用同一个网络
"""

from __future__ import annotations

from typing import Dict, List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from nn.layers import Conv2d, Dropout, Flatten, Layer, Linear, MaxPool2d, ReLU
from nn.tensor import Tensor
from utils.errors import NoForwardState, ShapeMismatch

OUTPUT_SIZE = 8


class NetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    patch_size: int = Field(default=128, ge=2, description="输入 patch 边长 (px)")
    in_channels: int = Field(default=2, description="P^A 与 P^B 堆叠的通道数")
    conv_widths: List[int] = Field(
        default_factory=lambda: [64, 64, 64, 64, 128, 128, 128, 128],
        description="3x3 卷积层输出通道数",
    )
    pool_after: List[int] = Field(default_factory=lambda: [2, 4, 6], description="在第 k 个卷积层后做 2x2 max-pool (从 1 计)")
    fc_widths: List[int] = Field(default_factory=lambda: [1024], description="隐藏全连接层宽度 (最后的 FC-8 自动追加)")
    dropout: float = Field(default=0.5, ge=0.0, lt=1.0, description="每个 FC 之前的 dropout 比例")
    init_std: float = Field(default=0.01, gt=0.0, description="截断正态初始化标准差")
    dtype: Literal["float32", "float64"] = Field(default="float32")
    seed: int = Field(default=0, description="初始化与 dropout 的随机种子")

    @field_validator("conv_widths", "fc_widths")
    @classmethod
    def _positive(cls, value: List[int]) -> List[int]:
        if any(w < 1 for w in value):
            raise ValueError("layer widths must be positive")
        return value

    @model_validator(mode="after")
    def _check_layout(self) -> "NetConfig":
        if self.in_channels != 2:
            raise ValueError("input must be a 2-channel patch stack")
        if not self.conv_widths:
            raise ValueError("at least one conv layer is required")
        bad = [k for k in self.pool_after if k < 1 or k > len(self.conv_widths)]
        if bad:
            raise ValueError(f"pool_after refers to missing conv layers: {bad}")
        if self.feature_size() < 1:
            raise ValueError("patch too small for the requested pooling")
        return self

    def feature_size(self) -> int:
        side = self.patch_size
        for _ in sorted(set(self.pool_after)):
            side //= 2
        return side * side * self.conv_widths[-1]

    @classmethod
    def toy(cls, patch_size: int = 32, **overrides) -> "NetConfig":
        """桌面规模：2 个卷积 + 1 个全连接"""
        values = dict(
            patch_size=patch_size,
            conv_widths=[16, 32],
            pool_after=[1, 2],
            fc_widths=[],
            dropout=0.0,
        )
        values.update(overrides)
        return cls(**values)


class RegressionNet:
    def __init__(self, config: NetConfig):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        self.rng = np.random.default_rng(config.seed)
        self.layers: List[Layer] = self._build()
        self.params: Dict[str, Tensor] = {}
        for layer in self.layers:
            self.params.update(layer.params)
        self._batch_size: int = 0
        self._has_forward = False

    def _build(self) -> List[Layer]:
        cfg = self.config
        layers: List[Layer] = []
        in_ch = cfg.in_channels
        pools = set(cfg.pool_after)
        for idx, width in enumerate(cfg.conv_widths, start=1):
            layers.append(Conv2d(f"conv{idx}", in_ch, width, self.rng, cfg.init_std, self.dtype))
            layers.append(ReLU())
            if idx in pools:
                layers.append(MaxPool2d())
            in_ch = width

        layers.append(Flatten())
        in_features = cfg.feature_size()
        for idx, width in enumerate(cfg.fc_widths, start=1):
            layers.append(Dropout(cfg.dropout, self.rng))
            layers.append(Linear(f"fc{idx}", in_features, width, self.rng, cfg.init_std, self.dtype))
            layers.append(ReLU())
            in_features = width

        # 输出层零初始化：初始预测为零偏移 (单位单应)
        layers.append(Dropout(cfg.dropout, self.rng))
        layers.append(Linear("head", in_features, OUTPUT_SIZE, self.rng, cfg.init_std, self.dtype, zero_init=True))
        return layers

    def forward(self, batch: np.ndarray, train_mode: bool = False) -> np.ndarray:
        batch = np.asarray(batch)
        p = self.config.patch_size
        expected = (p, p, self.config.in_channels)
        if batch.ndim != 4 or batch.shape[1:] != expected:
            raise ShapeMismatch(f"network input must be N x {p} x {p} x {self.config.in_channels}, got {batch.shape}")

        out = batch.astype(self.dtype, copy=False)
        for layer in self.layers:
            out = layer.forward(out, train_mode)
        self._batch_size = batch.shape[0]
        self._has_forward = True
        return out

    def backward(self, upstream: np.ndarray) -> None:
        """参数梯度 = d(sum(upstream * output)) / d(param)，覆盖旧梯度"""
        if not self._has_forward:
            raise NoForwardState("backward called without a preceding forward pass")
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (self._batch_size, OUTPUT_SIZE):
            raise ShapeMismatch(f"upstream shape {upstream.shape} != {(self._batch_size, OUTPUT_SIZE)}")

        self.zero_grad()
        grad = upstream
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        self._has_forward = False

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def grads(self) -> Dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros(t.shape)) for name, t in self.params.items()
        }

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        unexpected = set(state) - set(self.params)
        if missing or unexpected:
            raise ShapeMismatch(f"parameter names differ: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, value in state.items():
            tensor = self.params[name]
            if tuple(value.shape) != tensor.shape:
                raise ShapeMismatch(f"{name}: shape {tuple(value.shape)} != {tensor.shape}")
            tensor.value = np.asarray(value, dtype=self.dtype).copy()
        # 层对象持有同一个 Tensor，替换 value 即可生效

    def num_parameters(self) -> int:
        return int(sum(t.value.size for t in self.params.values()))
