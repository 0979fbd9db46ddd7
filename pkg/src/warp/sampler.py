"""
可微双线性采样 (DS)
V_i = sum_nm I_nm * max(0, 1-|u_i-m|) * max(0, 1-|v_i-n|)，越界像素按 0 处理
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from utils.errors import ShapeMismatch

_NEIGHBOURS = ((0, 0), (1, 0), (0, 1), (1, 1))


def as_image(img: np.ndarray) -> np.ndarray:
    """校验并返回 (H, W, C) 视图；二维输入视为单通道"""
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeMismatch(f"image must be HxW or HxWxC, got shape {arr.shape}")
    h, w, c = arr.shape
    if h < 2 or w < 2 or c < 1:
        raise ShapeMismatch(f"image must be at least 2x2 with one channel, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeMismatch("image contains non-finite values")
    return arr


def _as_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3 or grid.shape[2] != 2:
        raise ShapeMismatch(f"sampling grid must be H'xW'x2, got {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise ShapeMismatch("sampling grid contains non-finite coordinates")
    return grid


class _Stencil:
    """每个采样点的 2x2 邻域：整数位置、越界掩码与插值权重"""

    def __init__(self, grid: np.ndarray, height: int, width: int):
        # 远离图像的坐标先截断，避免取整溢出；截断后仍无核支撑
        u = np.clip(grid[..., 0], -2.0, width + 1.0)
        v = np.clip(grid[..., 1], -2.0, height + 1.0)
        self.x0 = np.floor(u).astype(np.int64)
        self.y0 = np.floor(v).astype(np.int64)
        fx = u - self.x0
        fy = v - self.y0
        self.wx = (1.0 - fx, fx)
        self.wy = (1.0 - fy, fy)
        # 核导数符号：m >= u 取 +1，m < u 取 -1，|m-u| >= 1 取 0
        self.sx = (np.where(fx == 0.0, 1.0, -1.0), np.where(fx > 0.0, 1.0, 0.0))
        self.sy = (np.where(fy == 0.0, 1.0, -1.0), np.where(fy > 0.0, 1.0, 0.0))
        self.height = height
        self.width = width

    def neighbour(self, dx: int, dy: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        xi = self.x0 + dx
        yi = self.y0 + dy
        valid = (xi >= 0) & (xi < self.width) & (yi >= 0) & (yi < self.height)
        return np.clip(yi, 0, self.height - 1), np.clip(xi, 0, self.width - 1), valid


def bilinear_sample(img: np.ndarray, grid: np.ndarray) -> np.ndarray:
    img = as_image(img)
    grid = _as_grid(grid)
    height, width, channels = img.shape
    st = _Stencil(grid, height, width)

    assert np.allclose((st.wx[0] + st.wx[1]) * (st.wy[0] + st.wy[1]), 1.0)

    out = np.zeros(grid.shape[:2] + (channels,), dtype=np.float64)
    for dx, dy in _NEIGHBOURS:
        yi, xi, valid = st.neighbour(dx, dy)
        weight = st.wx[dx] * st.wy[dy] * valid
        out += weight[..., None] * img[yi, xi]
    return out


def bilinear_backward(
    img: np.ndarray,
    grid: np.ndarray,
    grad_out: np.ndarray,
    compute_img_grad: bool = True,
) -> Tuple[Optional[np.ndarray], np.ndarray]:
    """返回 (dL/dI, dL/dG)；compute_img_grad=False 时 dL/dI 为 None"""
    img = as_image(img)
    grid = _as_grid(grid)
    height, width, channels = img.shape
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.ndim == 2:
        grad_out = grad_out[:, :, None]
    expected = grid.shape[:2] + (channels,)
    if grad_out.shape != expected:
        raise ShapeMismatch(f"grad_out shape {grad_out.shape} != sample output shape {expected}")

    st = _Stencil(grid, height, width)
    grad_grid = np.zeros(grid.shape, dtype=np.float64)
    grad_img = np.zeros((height * width, channels), dtype=np.float64) if compute_img_grad else None

    for dx, dy in _NEIGHBOURS:
        yi, xi, valid = st.neighbour(dx, dy)
        vals = img[yi, xi]
        upstream = np.sum(vals * grad_out, axis=-1) * valid
        grad_grid[..., 0] += upstream * st.sx[dx] * st.wy[dy]
        grad_grid[..., 1] += upstream * st.wx[dx] * st.sy[dy]

        if grad_img is not None:
            weight = st.wx[dx] * st.wy[dy] * valid
            flat_idx = (yi * width + xi)[valid]
            contrib = (weight[..., None] * grad_out)[valid]
            for c in range(channels):
                grad_img[:, c] += np.bincount(flat_idx, weights=contrib[:, c], minlength=height * width)

    if grad_img is not None:
        grad_img = grad_img.reshape(height, width, channels)
    return grad_img, grad_grid
