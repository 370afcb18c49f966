"""Pose algebra, camera projection, and frame conventions shared by all modules.

Display-frame convention: +x right, +y up, +z out of the display toward the
viewer. The virtual camera therefore looks along -z, and y is the
gravity-aligned vertical axis everywhere (world, VIO frames, filter state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

ORTHONORMAL_TOL = 1e-9


class BehindCameraError(ValueError):
    """Point is at or behind the camera plane (z >= 0) and cannot be drawn."""


def normalize_angle(theta: float) -> float:
    """Wrap an angle into [0, 2*pi)."""
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod can return TWO_PI after the correction for tiny negatives
    if t >= TWO_PI:
        t -= TWO_PI
    return t


@dataclass(frozen=True)
class Vec3:
    """Position vector in meters. All components must be finite."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite Vec3 components: ({self.x}, {self.y}, {self.z})")

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


@dataclass(frozen=True)
class RelState:
    """4-DoF state of a tracked node in the observer's frame.

    x, y, z are the node position in meters; theta is the yaw offset (about
    the vertical y axis) between the node's odometry-origin orientation and
    the observer's, normalized into [0, 2*pi) on construction.
    """

    x: float
    y: float
    z: float
    theta: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z, self.theta)):
            raise ValueError("non-finite RelState")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def position(self) -> Vec3:
        return Vec3(self.x, self.y, self.z)


@dataclass(frozen=True)
class Pose6DoF:
    """Rigid transform: 3x3 orthonormal rotation (det +1) plus translation.

    Acting on a point: world = R @ local + t, i.e. the pose maps local-frame
    coordinates into the parent frame.
    """

    rotation: np.ndarray
    translation: Vec3

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r.T @ r, np.eye(3), atol=ORTHONORMAL_TOL):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if np.linalg.det(r) < 0.0:
            raise ValueError("rotation has negative determinant (reflection)")
        object.__setattr__(self, "rotation", r)

    @classmethod
    def identity(cls) -> "Pose6DoF":
        return cls(np.eye(3), Vec3(0.0, 0.0, 0.0))

    @classmethod
    def from_yaw(cls, yaw: float, translation: Vec3 = Vec3(0.0, 0.0, 0.0)) -> "Pose6DoF":
        """Pose rotated by `yaw` about the vertical y axis."""
        c, s = math.cos(yaw), math.sin(yaw)
        r = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        return cls(r, translation)

    def apply(self, point: Vec3) -> Vec3:
        p = self.rotation @ point.to_array() + self.translation.to_array()
        return Vec3.from_array(p)

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation.to_array()
        return m


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels: focal lengths, principal point, resolution."""

    f_x: float
    f_y: float
    c_x: float
    c_y: float
    h_x: float
    h_y: float

    def __post_init__(self):
        if not (self.f_x > 0 and self.f_y > 0 and self.h_x > 0 and self.h_y > 0):
            raise ValueError("focal lengths and resolution must be positive")
        if not (0 <= self.c_x <= self.h_x and 0 <= self.c_y <= self.h_y):
            raise ValueError("principal point outside sensor")


def compose(a: Pose6DoF, b: Pose6DoF) -> Pose6DoF:
    """Pose whose action on a point is b(a(point)): a first, then b."""
    r = b.rotation @ a.rotation
    t = b.rotation @ a.translation.to_array() + b.translation.to_array()
    return Pose6DoF(r, Vec3.from_array(t))


def invert(p: Pose6DoF) -> Pose6DoF:
    """Inverse transform, so compose(p, invert(p)) is the identity."""
    r = p.rotation.T
    t = -(r @ p.translation.to_array())
    return Pose6DoF(r, Vec3.from_array(t))


def relative_position(display: Pose6DoF, world_point: Vec3) -> Vec3:
    """Express a world-frame point in the display's frame (inverse pose applied)."""
    return invert(display).apply(world_point)


def project(k: CameraIntrinsics, point: Vec3) -> tuple[float, float]:
    """Project a display-frame point to pixel coordinates (u right, v down).

    The camera looks along -z, so depth is -point.z. Raises BehindCameraError
    for points at or behind the camera plane. Returned pixels may fall
    outside [0, resolution).
    """
    if point.z >= 0.0:
        raise BehindCameraError(f"point z={point.z} is not in front of the camera")
    depth = -point.z
    u = k.c_x + k.f_x * (point.x / depth)
    v = k.c_y - k.f_y * (point.y / depth)
    return u, v


def rotate_yaw(v: Vec3, theta: float) -> Vec3:
    """Rotate a vector by `theta` about the vertical y axis.

    x' = x cos(theta) + z sin(theta); y' = y; z' = z cos(theta) - x sin(theta).
    This is the exact form the odometry update applies to motion deltas.
    """
    c, s = math.cos(theta), math.sin(theta)
    return Vec3(v.x * c + v.z * s, v.y, v.z * c - v.x * s)
