"""
单应矩阵、四角点集合与 4-point 参数化
所有坐标均为像素坐标 (u 向右, v 向下)，角点顺序固定为 TL, TR, BR, BL
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from utils.errors import DegenerateProjection, ShapeMismatch, SingularHomography

DET_EPS = 1e-12
DENOM_EPS = 1e-12
COLLINEAR_AREA_EPS = 1e-9

ArrayLike = Union[np.ndarray, Sequence[float], Sequence[Sequence[float]]]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Homography:
    """
    非奇异 3x3 矩阵，构造时归一化使 m[2][2] == 1
    h33 为 0 时 (例如左上 2x2 块奇异的单应的逆) 改为按 Frobenius 范数归一化
    """

    m: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ShapeMismatch(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise SingularHomography("homography has non-finite entries")
        if abs(m[2, 2]) > DET_EPS:
            m = m / m[2, 2]
            m[2, 2] = 1.0
        else:
            norm = np.linalg.norm(m)
            if norm == 0.0:
                raise SingularHomography("homography is singular (all entries are zero)")
            m = m / norm
        if abs(np.linalg.det(m)) <= DET_EPS:
            raise SingularHomography(f"homography is singular (det={np.linalg.det(m):.3e})")
        object.__setattr__(self, "m", _frozen(m))

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))

    def is_affine(self, tol: float = 1e-12) -> bool:
        return abs(self.m[2, 0]) <= tol and abs(self.m[2, 1]) <= tol

    def tolist(self) -> list:
        return self.m.tolist()


@dataclass(frozen=True, eq=False)
class CornerSet:
    """四个角点 (u_k, v_k)，形状 (4, 2)"""

    pts: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.pts, dtype=np.float64)
        if pts.shape == (8,):
            pts = pts.reshape(4, 2)
        if pts.shape != (4, 2):
            raise ShapeMismatch(f"corner set must be 4x2, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ShapeMismatch("corner set has non-finite entries")
        object.__setattr__(self, "pts", _frozen(pts))

    @classmethod
    def square(cls, x: float, y: float, size: float) -> "CornerSet":
        return cls(
            np.array(
                [[x, y], [x + size, y], [x + size, y + size], [x, y + size]],
                dtype=np.float64,
            )
        )

    def min_triangle_area(self) -> float:
        areas = []
        for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
            a, b, c = self.pts[i], self.pts[j], self.pts[k]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            areas.append(0.5 * abs(cross))
        return float(min(areas))

    def is_degenerate(self) -> bool:
        return self.min_triangle_area() <= COLLINEAR_AREA_EPS

    def flat(self) -> np.ndarray:
        return self.pts.reshape(8).copy()


@dataclass(frozen=True, eq=False)
class FourPointDelta:
    """H_4pt: 角点偏移 (Δu_k, Δv_k)，形状 (4, 2)，展平顺序 u0, v0, u1, v1, ..."""

    d: np.ndarray

    def __post_init__(self) -> None:
        d = np.array(self.d, dtype=np.float64)
        if d.shape == (8,):
            d = d.reshape(4, 2)
        if d.shape != (4, 2):
            raise ShapeMismatch(f"four-point delta must be 4x2, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ShapeMismatch("four-point delta has non-finite entries")
        object.__setattr__(self, "d", _frozen(d))

    @classmethod
    def zeros(cls) -> "FourPointDelta":
        return cls(np.zeros((4, 2)))

    def flat(self) -> np.ndarray:
        return self.d.reshape(8).copy()


def project(h: Homography, p: ArrayLike) -> Tuple[float, float]:
    u, v = (float(c) for c in np.asarray(p, dtype=np.float64).reshape(2))
    m = h.m
    denom = m[2, 0] * u + m[2, 1] * v + m[2, 2]
    if abs(denom) <= DENOM_EPS:
        raise DegenerateProjection(f"projection denominator {denom:.3e} at ({u}, {v})")
    return (
        (m[0, 0] * u + m[0, 1] * v + m[0, 2]) / denom,
        (m[1, 0] * u + m[1, 1] * v + m[1, 2]) / denom,
    )


def project_points(h: Union[Homography, np.ndarray], pts: np.ndarray) -> np.ndarray:
    """向量化的投影，pts 形状 (..., 2)"""
    m = h.m if isinstance(h, Homography) else np.asarray(h, dtype=np.float64)
    pts = np.asarray(pts, dtype=np.float64)
    u, v = pts[..., 0], pts[..., 1]
    denom = m[2, 0] * u + m[2, 1] * v + m[2, 2]
    if np.any(np.abs(denom) <= DENOM_EPS):
        raise DegenerateProjection("projection denominator vanishes for at least one point")
    out = np.empty_like(pts)
    out[..., 0] = (m[0, 0] * u + m[0, 1] * v + m[0, 2]) / denom
    out[..., 1] = (m[1, 0] * u + m[1, 1] * v + m[1, 2]) / denom
    return out


def corners_plus_delta(c: CornerSet, d: FourPointDelta) -> CornerSet:
    return CornerSet(c.pts + d.d)


def invert(h: Homography) -> Homography:
    if abs(np.linalg.det(h.m)) <= DET_EPS:
        raise SingularHomography("cannot invert a singular homography")
    try:
        inv = np.linalg.inv(h.m)
    except np.linalg.LinAlgError as exc:
        raise SingularHomography(str(exc)) from exc
    return Homography(inv)
