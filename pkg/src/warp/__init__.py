from warp.grid import (
    generate_grid,
    norm_matrix,
    normalized_inverse,
    projective_grid,
    projective_grid_backward,
)
from warp.objective import PIPELINE_ERRORS, PhotometricResult, photometric_objective
from warp.sampler import as_image, bilinear_backward, bilinear_sample
from warp.transformer import warp_image

__all__ = [
    "PIPELINE_ERRORS",
    "PhotometricResult",
    "as_image",
    "bilinear_backward",
    "bilinear_sample",
    "generate_grid",
    "norm_matrix",
    "normalized_inverse",
    "photometric_objective",
    "projective_grid",
    "projective_grid_backward",
    "warp_image",
]
