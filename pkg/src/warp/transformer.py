from __future__ import annotations

import numpy as np

from geom.homography import Homography
from warp.grid import generate_grid, normalized_inverse
from warp.sampler import as_image, bilinear_sample


def warp_image(img: np.ndarray, h: Homography, target_w: int, target_h: int) -> np.ndarray:
    """逆向 warp：V(x) = I(H^-1 x)，输出 (target_h, target_w, C)"""
    img = as_image(img)
    h_inv = normalized_inverse(h, target_w, target_h)
    grid = generate_grid(h_inv, target_w, target_h)
    return bilinear_sample(img, grid)
