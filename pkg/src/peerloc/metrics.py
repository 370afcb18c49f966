"""Localization error metrics, including the display-proportional AR metric.

Axis naming note: the display frame is y-up, so the horizontal plane is
spanned by the x and z axes. The metric names keep the conventional AR
evaluation labels (eps_xy = horizontal error magnitude, eps_z = vertical),
which were coined for z-up survey frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import CameraIntrinsics, RelState

DEFAULT_CAMERA = CameraIntrinsics(f_x=1440.0, f_y=1440.0, c_x=960.0, c_y=540.0,
                                  h_x=1920.0, h_y=1080.0)


class DegenerateDepthError(ValueError):
    """Effective depth |dist + eps_z| is too small for a meaningful ratio."""


def error_components(dx: float, dy: float, dz: float) -> tuple[float, float, float]:
    """Split an error vector (y-up frame) into (3-D norm, horizontal, vertical)."""
    eps_xy = math.hypot(dx, dz)
    eps_z = abs(dy)
    return math.hypot(eps_xy, eps_z), eps_xy, eps_z


def geometric_error_3d(est: RelState, truth: RelState) -> tuple[float, float, float]:
    """Pairwise 3-D error split into horizontal and vertical components.

    Both states must be expressed in the same display frame. Returns
    (geom_3d, eps_xy, eps_z) with geom_3d^2 == eps_xy^2 + eps_z^2.
    """
    return error_components(est.x - truth.x, est.y - truth.y, est.z - truth.z)


def display_proportional_error(eps_xy: float, eps_z: float, dist: float,
                               k: CameraIntrinsics = DEFAULT_CAMERA) -> float:
    """Overlay displacement as a fraction of the display's horizontal size.

    (eps_xy / |dist + eps_z|) * (f_x / H_x); multiply by H_x for pixel error.
    """
    if dist <= 0.0:
        raise ValueError("dist must be positive")
    depth = abs(dist + eps_z)
    if depth < 1e-6:
        raise DegenerateDepthError(f"effective depth {depth} below 1e-6")
    return (eps_xy / depth) * (k.f_x / k.h_x)


@dataclass(frozen=True)
class ErrorSample:
    """One pairwise error measurement at a ground-truth snapshot."""

    time: float
    display: int
    target: int
    geom_3d: float
    eps_xy: float
    eps_z: float
    true_dist: float
    dpe: float
    pixel_err: float

    def __post_init__(self):
        if abs(self.geom_3d**2 - (self.eps_xy**2 + self.eps_z**2)) > 1e-9:
            raise ValueError("error decomposition identity violated")
        if self.dpe < 0.0:
            raise ValueError("dpe must be >= 0")


def make_error_sample(time: float, display: int, target: int,
                      dx: float, dy: float, dz: float, true_dist: float,
                      camera: CameraIntrinsics = DEFAULT_CAMERA) -> ErrorSample:
    geom, eps_xy, eps_z = error_components(dx, dy, dz)
    dpe = display_proportional_error(eps_xy, eps_z, true_dist, camera)
    return ErrorSample(time, display, target, geom, eps_xy, eps_z, true_dist,
                       dpe, dpe * camera.h_x)
