from geom.dlt import dlt_backward, dlt_solve, h4pt_backward, h4pt_to_h
from geom.homography import (
    CornerSet,
    FourPointDelta,
    Homography,
    corners_plus_delta,
    invert,
    project,
    project_points,
)

__all__ = [
    "CornerSet",
    "FourPointDelta",
    "Homography",
    "corners_plus_delta",
    "dlt_backward",
    "dlt_solve",
    "h4pt_backward",
    "h4pt_to_h",
    "invert",
    "project",
    "project_points",
]
