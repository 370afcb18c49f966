"""Axis-aligned building geometry for line-of-sight classification.

World frame is y-up: floors are horizontal slabs at constant y, walls are
vertical rectangles at constant x or z. Rectangles are all the NLOS model
needs; radio degradation is driven purely by the obstruction count of the
segment between two radios.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Vec3

# (u, v) extents span the two non-normal axes in alphabetical order:
# axis 'x' -> (y, z), axis 'y' -> (x, z), axis 'z' -> (x, y)
_UV_AXES = {"x": (1, 2), "y": (0, 2), "z": (0, 1)}
_NORMAL_AXIS = {"x": 0, "y": 1, "z": 2}


class InfeasibleGeometryError(ValueError):
    """Building has no walkable space for the requested trajectory."""


@dataclass(frozen=True)
class WallRect:
    """Rectangle on the plane {axis coordinate == offset} with (u, v) extents."""

    axis: str
    offset: float
    u_min: float
    u_max: float
    v_min: float
    v_max: float

    def __post_init__(self):
        if self.axis not in _NORMAL_AXIS:
            raise ValueError(f"axis must be x, y or z, got {self.axis!r}")
        if self.u_min > self.u_max or self.v_min > self.v_max:
            raise ValueError("inverted rectangle extents")

    def intersects_segment(self, a: np.ndarray, b: np.ndarray) -> bool:
        n = _NORMAL_AXIS[self.axis]
        ui, vi = _UV_AXES[self.axis]
        da = b[n] - a[n]
        if abs(da) < 1e-12:
            return False  # parallel to the plane
        t = (self.offset - a[n]) / da
        if t < 0.0 or t > 1.0:
            return False
        u = a[ui] + t * (b[ui] - a[ui])
        v = a[vi] + t * (b[vi] - a[vi])
        return self.u_min <= u <= self.u_max and self.v_min <= v <= self.v_max


@dataclass
class BuildingModel:
    """Walls (vertical rects), floors (horizontal slabs ordered by height), bounds."""

    walls: list[WallRect] = field(default_factory=list)
    floors: list[WallRect] = field(default_factory=list)
    bounds_min: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0]))
    bounds_max: np.ndarray = field(default_factory=lambda: np.array([20.0, 3.0, 20.0]))
    floor_heights: list[float] = field(default_factory=lambda: [0.0])

    def __post_init__(self):
        self.bounds_min = np.asarray(self.bounds_min, dtype=float)
        self.bounds_max = np.asarray(self.bounds_max, dtype=float)
        self.floors = sorted(self.floors, key=lambda f: f.offset)

    def obstruction_count(self, a: np.ndarray, b: np.ndarray) -> int:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        count = 0
        for rect in self.walls:
            if rect.intersects_segment(a, b):
                count += 1
        for rect in self.floors:
            if rect.intersects_segment(a, b):
                count += 1
        return count

    def walls_on_level(self, y: float) -> list[tuple[float, float, float, float]]:
        """2-D wall segments (x1, z1, x2, z2) that block walking at height y."""
        segments = []
        for rect in self.walls:
            ui, _ = _UV_AXES[rect.axis]
            if rect.axis == "x":
                if rect.u_min <= y <= rect.u_max:
                    segments.append((rect.offset, rect.v_min, rect.offset, rect.v_max))
            elif rect.axis == "z":
                if rect.v_min <= y <= rect.v_max:
                    segments.append((rect.u_min, rect.offset, rect.u_max, rect.offset))
        return segments

    def in_bounds(self, p: np.ndarray, margin: float = 0.0) -> bool:
        return bool(np.all(p >= self.bounds_min + margin) and np.all(p <= self.bounds_max - margin))


def is_nlos(a: Vec3 | np.ndarray, b: Vec3 | np.ndarray, building: BuildingModel) -> tuple[bool, int]:
    """Classify the radio path a-b: (obstructed?, number of rectangles crossed)."""
    pa = a.to_array() if isinstance(a, Vec3) else np.asarray(a, dtype=float)
    pb = b.to_array() if isinstance(b, Vec3) else np.asarray(b, dtype=float)
    count = building.obstruction_count(pa, pb)
    return count >= 1, count


# ----------------------------------------------------------------------
# bundled buildings


def _wall_x(x, z0, z1, y0, y1):
    return WallRect("x", x, y0, y1, z0, z1)


def _wall_z(z, x0, x1, y0, y1):
    return WallRect("z", z, x0, x1, y0, y1)


def open_area(x_size: float = 40.0, z_size: float = 40.0) -> BuildingModel:
    """Unobstructed outdoor region."""
    return BuildingModel(
        walls=[], floors=[],
        bounds_min=np.array([0.0, 0.0, 0.0]),
        bounds_max=np.array([x_size, 3.0, z_size]),
        floor_heights=[0.0],
    )


def office_floor_walls(y0: float, y1: float, x_size: float, z_size: float) -> list[WallRect]:
    """Interior walls for one office level: a corridor spine with rooms off it.

    Door gaps are left in each wall so grid pathfinding can route through.
    """
    walls = []
    zc = z_size * 0.5
    # corridor walls along x with door gaps every ~6 m
    for z in (zc - 1.5, zc + 1.5):
        x = 2.0
        while x + 4.0 < x_size - 2.0:
            walls.append(_wall_z(z, x, x + 4.0, y0, y1))
            x += 6.0
    # room dividers perpendicular to the corridor
    for x in np.arange(6.0, x_size - 4.0, 8.0):
        walls.append(_wall_x(x, 0.5, zc - 1.5, y0, y1))
        walls.append(_wall_x(x, zc + 1.5, z_size - 0.5, y0, y1))
    return walls


def single_floor_office(x_size: float = 24.0, z_size: float = 14.0,
                        with_walls: bool = True) -> BuildingModel:
    walls = office_floor_walls(0.0, 3.0, x_size, z_size) if with_walls else []
    return BuildingModel(
        walls=walls, floors=[],
        bounds_min=np.array([0.0, 0.0, 0.0]),
        bounds_max=np.array([x_size, 3.0, z_size]),
        floor_heights=[0.0],
    )


def three_floor_office(x_size: float = 30.0, z_size: float = 15.0,
                       floor_height: float = 3.0, num_floors: int = 3) -> BuildingModel:
    """Multi-story office: full slabs between levels plus per-level interior walls."""
    walls = []
    floors = []
    heights = []
    for level in range(num_floors):
        y0 = level * floor_height
        heights.append(y0)
        walls.extend(office_floor_walls(y0, y0 + floor_height, x_size, z_size))
        if level > 0:
            floors.append(WallRect("y", y0, 0.0, x_size, 0.0, z_size))
    return BuildingModel(
        walls=walls, floors=floors,
        bounds_min=np.array([0.0, 0.0, 0.0]),
        bounds_max=np.array([x_size, num_floors * floor_height, z_size]),
        floor_heights=heights,
    )


def parking_garage(x_size: float = 25.0, z_size: float = 25.0) -> BuildingModel:
    """Single dim level dense with concrete pillars: heavy NLOS, no full dividers."""
    walls = []
    for x in np.arange(4.0, x_size - 2.0, 5.0):
        for z in np.arange(4.0, z_size - 2.0, 5.0):
            walls.append(_wall_x(x, 0.0, 3.0, z - 0.4, z + 0.4))
            walls.append(_wall_z(z, x - 0.4, x + 0.4, 0.0, 3.0))
    return BuildingModel(
        walls=walls, floors=[],
        bounds_min=np.array([0.0, 0.0, 0.0]),
        bounds_max=np.array([x_size, 3.0, z_size]),
        floor_heights=[0.0],
    )


BUILDING_LIBRARY = {
    "outdoor-open": open_area,
    "office": single_floor_office,
    "office-open": lambda: single_floor_office(with_walls=False),
    "three-floor": three_floor_office,
    "garage": parking_garage,
}


def build(name: str) -> BuildingModel:
    try:
        return BUILDING_LIBRARY[name]()
    except KeyError:
        raise KeyError(f"unknown building {name!r}; known: {sorted(BUILDING_LIBRARY)}") from None
