"""
归一化逆矩阵与参数化采样网格 (PSGG)

约定：像素中心位于整数坐标；M 把归一化坐标 [-1, 1] 映射到像素坐标，
    x_pix = W'/2 * x_norm + W'/2
"""

from __future__ import annotations

from typing import Tuple, Union

import numpy as np

from geom.homography import DENOM_EPS, Homography, invert
from utils.errors import DegenerateProjection, ShapeMismatch

MatrixLike = Union[Homography, np.ndarray]

GRID_SNAP_EPS = 1e-9


def _as_matrix(h: MatrixLike) -> np.ndarray:
    return h.m if isinstance(h, Homography) else np.asarray(h, dtype=np.float64)


def norm_matrix(width: int, height: int) -> np.ndarray:
    return np.array(
        [
            [width / 2.0, 0.0, width / 2.0],
            [0.0, height / 2.0, height / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )


def norm_matrix_inv(width: int, height: int) -> np.ndarray:
    return np.array(
        [
            [2.0 / width, 0.0, -1.0],
            [0.0, 2.0 / height, -1.0],
            [0.0, 0.0, 1.0],
        ]
    )


def normalized_inverse(h: Homography, target_w: int, target_h: int) -> Homography:
    """M^-1 H^-1 M：归一化目标坐标 -> 归一化源坐标"""
    h_inv = invert(h)
    return Homography(norm_matrix_inv(target_w, target_h) @ h_inv.m @ norm_matrix(target_w, target_h))


def _window_coords(width: int, height: int, origin: Tuple[float, float]) -> Tuple[np.ndarray, np.ndarray]:
    xs = np.arange(width, dtype=np.float64) + origin[0]
    ys = np.arange(height, dtype=np.float64) + origin[1]
    return np.meshgrid(xs, ys)


def projective_grid(
    h: MatrixLike,
    width: int,
    height: int,
    origin: Tuple[float, float] = (0.0, 0.0),
) -> np.ndarray:
    """
    像素空间采样网格：目标窗口 (左上角位于 origin) 的每个像素 x 存储 dehom(h x)
    返回形状 (height, width, 2)，最后一维为 (u, v)
    """
    m = _as_matrix(h)
    x, y = _window_coords(width, height, origin)
    num_u = m[0, 0] * x + m[0, 1] * y + m[0, 2]
    num_v = m[1, 0] * x + m[1, 1] * y + m[1, 2]
    denom = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if np.any(np.abs(denom) <= DENOM_EPS):
        raise DegenerateProjection("sampling grid hits the line at infinity")
    return np.stack([num_u / denom, num_v / denom], axis=-1)


def projective_grid_backward(
    h: MatrixLike,
    width: int,
    height: int,
    origin: Tuple[float, float],
    grad_grid: np.ndarray,
) -> np.ndarray:
    """由 dL/dG 求 dL/dH (3x3)，按 u = a/c, v = b/c 求导"""
    m = _as_matrix(h)
    grad_grid = np.asarray(grad_grid, dtype=np.float64)
    if grad_grid.shape != (height, width, 2):
        raise ShapeMismatch(f"grad_grid shape {grad_grid.shape} != {(height, width, 2)}")

    x, y = _window_coords(width, height, origin)
    denom = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    u = (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / denom
    v = (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / denom

    gu = grad_grid[..., 0] / denom
    gv = grad_grid[..., 1] / denom
    gw = -(gu * u + gv * v)

    p = np.stack([x, y, np.ones_like(x)], axis=-1).reshape(-1, 3)
    coeffs = np.stack([gu, gv, gw], axis=-1).reshape(-1, 3)
    return coeffs.T @ p


def generate_grid(h_inv: Homography, target_w: int, target_h: int) -> np.ndarray:
    """
    PSGG：h_inv 作用于归一化目标坐标，结果换回像素单位
    等价于像素空间矩阵 M h_inv M^-1 作用于目标像素
    """
    pixel_h = norm_matrix(target_w, target_h) @ h_inv.m @ norm_matrix_inv(target_w, target_h)
    grid = projective_grid(pixel_h, target_w, target_h)
    # M 与 M^-1 复合后残留 ~1e-13 的舍入，整数坐标需精确落在像素上
    snapped = np.round(grid)
    return np.where(np.abs(grid - snapped) < GRID_SNAP_EPS, snapped, grid)
