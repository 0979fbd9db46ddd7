"""
网络之后的可微管线：H_4pt -> Tensor DLT -> 采样网格 -> 双线性采样 -> 光度损失

网格只覆盖 P^B 所在的窗口，采样读取整幅 I^A，即 V(x) = I^A(H x)。
像素空间的网格等于 generate_grid(normalized_inverse(H^-1))，M 与 M^-1 在复合中相互抵消。
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from geom import CornerSet, FourPointDelta, Homography, h4pt_backward, h4pt_to_h
from nn.losses import photometric_loss
from utils.errors import CollinearCorners, DegenerateProjection, IllConditionedSystem, SingularHomography
from warp.grid import projective_grid, projective_grid_backward
from warp.sampler import bilinear_backward, bilinear_sample

# 偏移量退化时管线可能抛出的错误；训练跳过该样本，直接配准就此停止
PIPELINE_ERRORS = (CollinearCorners, IllConditionedSystem, SingularHomography, DegenerateProjection)


@dataclass(frozen=True, eq=False)
class PhotometricResult:
    loss: float
    grad_delta: np.ndarray
    h: Homography
    warped: np.ndarray


def photometric_objective(
    image_a: np.ndarray,
    corners_a: CornerSet,
    patch_b: np.ndarray,
    delta: np.ndarray,
    need_grad: bool = True,
    center: bool = False,
) -> PhotometricResult:
    """
    单个样本的光度损失及其对 8 个偏移量的梯度 (展平顺序 u0, v0, ..., u3, v3)

    center=True 时两个 patch 先各自减去均值再算 L1，损失对整体亮度平移不变
    """
    d = FourPointDelta(np.asarray(delta, dtype=np.float64).reshape(4, 2))
    h = h4pt_to_h(corners_a, d)

    size = int(patch_b.shape[0])
    origin: Tuple[float, float] = (float(corners_a.pts[0, 0]), float(corners_a.pts[0, 1]))
    grid = projective_grid(h, size, size, origin)
    warped = bilinear_sample(image_a, grid)[..., 0]
    if center:
        target = np.asarray(patch_b, dtype=np.float64)
        loss, grad_centered = photometric_loss(warped - warped.mean(), target - target.mean())
        # 去均值是对称投影 I - 11^T/N
        grad_warped = grad_centered - grad_centered.mean()
    else:
        loss, grad_warped = photometric_loss(warped, patch_b)

    if not need_grad:
        return PhotometricResult(loss=loss, grad_delta=np.zeros(8), h=h, warped=warped)

    _, grad_grid = bilinear_backward(image_a, grid, grad_warped, compute_img_grad=False)
    grad_h = projective_grid_backward(h, size, size, origin, grad_grid)
    grad_d = h4pt_backward(corners_a, d, h, grad_h)
    return PhotometricResult(loss=loss, grad_delta=grad_d.reshape(8), h=h, warped=warped)
