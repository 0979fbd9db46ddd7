"""
Tensor DLT：四点对应 -> 3x3 单应矩阵 (H33 = 1)，以及对角点坐标的解析梯度

每个对应点贡献两行 (与 A^(3) 的前两行同序):
    [ 0   0   0  -u  -v  -1   v'u   v'v ] h = -v'
    [ u   v   1   0   0   0  -u'u  -u'v ] h =  u'
8x8 系统用带部分主元的 LU 求解 (4 点时伪逆即逆)。
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from geom.homography import CornerSet, FourPointDelta, Homography, corners_plus_delta
from utils.errors import CollinearCorners, IllConditionedSystem, ShapeMismatch

CONDITION_LIMIT = 1e10


@dataclass(frozen=True, eq=False)
class _Factorization:
    lu: np.ndarray
    piv: np.ndarray
    scale: np.ndarray
    b: np.ndarray


def build_system(src: CornerSet, dst: CornerSet) -> Tuple[np.ndarray, np.ndarray]:
    u, v = src.pts[:, 0], src.pts[:, 1]
    up, vp = dst.pts[:, 0], dst.pts[:, 1]
    zeros = np.zeros(4)
    ones = np.ones(4)

    a = np.empty((8, 8))
    a[0::2] = np.stack([zeros, zeros, zeros, -u, -v, -ones, vp * u, vp * v], axis=1)
    a[1::2] = np.stack([u, v, ones, zeros, zeros, zeros, -up * u, -up * v], axis=1)

    b = np.empty(8)
    b[0::2] = -vp
    b[1::2] = up
    return a, b


def _factorize(src: CornerSet, dst: CornerSet) -> _Factorization:
    if src.is_degenerate():
        raise CollinearCorners(f"three source corners are collinear: {src.pts.tolist()}")
    if dst.is_degenerate():
        raise CollinearCorners(f"three target corners are collinear: {dst.pts.tolist()}")

    a, b = build_system(src, dst)
    # 列均衡：像素坐标下各列量级差异可达 1e5
    col_max = np.max(np.abs(a), axis=0)
    scale = np.where(col_max > 0, 1.0 / np.where(col_max > 0, col_max, 1.0), 1.0)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(a * scale, check_finite=True)

    diag = np.abs(np.diag(lu))
    if diag.min() == 0.0 or diag.max() / diag.min() > CONDITION_LIMIT:
        ratio = np.inf if diag.min() == 0.0 else diag.max() / diag.min()
        raise IllConditionedSystem(f"DLT system condition estimate {ratio:.3e} exceeds {CONDITION_LIMIT:.0e}")

    return _Factorization(lu=lu, piv=piv, scale=scale, b=b)


def dlt_solve(src: CornerSet, dst: CornerSet) -> Homography:
    fact = _factorize(src, dst)
    if np.array_equal(src.pts, dst.pts):
        # 不动点：零偏移必须精确得到单位阵
        return Homography.identity()

    y = lu_solve((fact.lu, fact.piv), fact.b)
    h = fact.scale * y
    return Homography(np.append(h, 1.0).reshape(3, 3))


def dlt_backward(
    src: CornerSet,
    dst: CornerSet,
    h: Homography,
    grad_h: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    给定 dL/dH，返回 (dL/d src 坐标, dL/d dst 坐标)，形状均为 (4, 2)

    dh = A^-1 (db - dA h)  =>  lambda = A^-T g,  dL/db = lambda,  dL/dA = -lambda h^T
    H33 固定为 1，其梯度被忽略。
    """
    grad_h = np.asarray(grad_h, dtype=np.float64)
    if grad_h.shape != (3, 3):
        raise ShapeMismatch(f"grad_h must be 3x3, got {grad_h.shape}")

    fact = _factorize(src, dst)
    g = grad_h.reshape(9)[:8]
    lam = lu_solve((fact.lu, fact.piv), fact.scale * g, trans=1)
    h8 = h.m.reshape(9)[:8]
    grad_a = -np.outer(lam, h8)

    u, v = src.pts[:, 0], src.pts[:, 1]
    up, vp = dst.pts[:, 0], dst.pts[:, 1]
    r1, r2 = grad_a[0::2], grad_a[1::2]
    l1, l2 = lam[0::2], lam[1::2]

    grad_src = np.empty((4, 2))
    grad_src[:, 0] = -r1[:, 3] + vp * r1[:, 6] + r2[:, 0] - up * r2[:, 6]
    grad_src[:, 1] = -r1[:, 4] + vp * r1[:, 7] + r2[:, 1] - up * r2[:, 7]

    grad_dst = np.empty((4, 2))
    grad_dst[:, 0] = -u * r2[:, 6] - v * r2[:, 7] + l2
    grad_dst[:, 1] = u * r1[:, 6] + v * r1[:, 7] - l1
    return grad_src, grad_dst


def h4pt_to_h(c_a: CornerSet, d: FourPointDelta) -> Homography:
    return dlt_solve(c_a, corners_plus_delta(c_a, d))


def h4pt_backward(
    c_a: CornerSet,
    d: FourPointDelta,
    h: Homography,
    grad_h: np.ndarray,
) -> np.ndarray:
    """Tensor DLT 层对预测偏移的梯度 (C^A 固定，C^B = C^A + d)"""
    _, grad_dst = dlt_backward(c_a, corners_plus_delta(c_a, d), h, grad_h)
    return grad_dst
