"""Ground-truth walking trajectories inside a building model.

Four generators: a smoothed heading random walk, grid shortest-path motion
between sampled rooms, paired walking (a follower replaying the leader's path
with a short delay, which bounds separation by construction), and a stress
pattern with sprints, abrupt stops and hops. All run on a fixed tick grid and
never cross walls or leave bounds.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .building import BuildingModel, InfeasibleGeometryError

WALK_CLEARANCE = 0.4
DEVICE_HEIGHT = 1.4


@dataclass
class Trajectory:
    node_id: int
    tick_hz: int
    positions: np.ndarray  # (N, 3)
    yaws: np.ndarray  # (N,)
    v_max: float = 3.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.yaws = np.asarray(self.yaws, dtype=float)
        if len(self.positions) != len(self.yaws) or len(self.positions) < 1:
            raise ValueError("positions and yaws must be equal-length and non-empty")
        step = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        limit = self.v_max / self.tick_hz + 1e-9
        if step.size and float(np.max(step)) > limit:
            raise ValueError(f"per-tick displacement {np.max(step):.4f} exceeds v_max*dt {limit:.4f}")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_hz

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def position(self, k: int) -> np.ndarray:
        return self.positions[k]

    def position_at(self, t: float) -> np.ndarray:
        k = min(int(round(t * self.tick_hz)), len(self) - 1)
        return self.positions[k]


# ----------------------------------------------------------------------
# 2-D collision helpers (x, z plane of one level)


def _seg_arrays(segments) -> np.ndarray:
    return np.asarray(segments, dtype=float).reshape(-1, 4)


def _point_seg_dist(p: np.ndarray, segs: np.ndarray) -> np.ndarray:
    a = segs[:, 0:2]
    b = segs[:, 2:4]
    ab = b - a
    denom = np.sum(ab * ab, axis=1)
    t = np.clip(np.sum((p - a) * ab, axis=1) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(p - proj, axis=1)


def _crosses(p: np.ndarray, q: np.ndarray, segs: np.ndarray) -> bool:
    """True if the 2-D segment p->q intersects any wall segment."""
    if segs.size == 0:
        return False
    ax, az, bx, bz = segs[:, 0], segs[:, 1], segs[:, 2], segs[:, 3]
    rx, rz = q[0] - p[0], q[1] - p[1]
    d1 = rx * (az - p[1]) - rz * (ax - p[0])
    d2 = rx * (bz - p[1]) - rz * (bx - p[0])
    sx, sz = bx - ax, bz - az
    d3 = sx * (p[1] - az) - sz * (p[0] - ax)
    d4 = sx * (q[1] - az) - sz * (q[0] - ax)
    return bool(np.any((d1 * d2 <= 0) & (d3 * d4 <= 0)))


class _LevelMap:
    """Walkable test for one building level at device height."""

    def __init__(self, building: BuildingModel, floor_y: float):
        self.building = building
        self.y = floor_y + DEVICE_HEIGHT
        self.segs = _seg_arrays(building.walls_on_level(self.y))
        self.lo = building.bounds_min[[0, 2]] + WALK_CLEARANCE
        self.hi = building.bounds_max[[0, 2]] - WALK_CLEARANCE
        if np.any(self.hi <= self.lo):
            raise InfeasibleGeometryError("bounds leave no walkable space")
        # flat per-segment arrays for the tick-rate walkability tests
        self._ax, self._az = self.segs[:, 0], self.segs[:, 1]
        ab = self.segs[:, 2:4] - self.segs[:, 0:2]
        self._abx, self._abz = ab[:, 0], ab[:, 1]
        denom = self._abx**2 + self._abz**2
        self._denom = np.where(denom > 0, denom, 1.0)
        self._clear2 = WALK_CLEARANCE * WALK_CLEARANCE

    def free(self, p2: np.ndarray) -> bool:
        if not (self.lo[0] <= p2[0] <= self.hi[0] and self.lo[1] <= p2[1] <= self.hi[1]):
            return False
        if self.segs.size:
            tx = p2[0] - self._ax
            tz = p2[1] - self._az
            t = np.clip((tx * self._abx + tz * self._abz) / self._denom, 0.0, 1.0)
            dx = tx - t * self._abx
            dz = tz - t * self._abz
            if float(np.min(dx * dx + dz * dz)) < self._clear2:
                return False
        return True

    def _wall_dist2(self, p2: np.ndarray) -> float:
        tx = p2[0] - self._ax
        tz = p2[1] - self._az
        t = np.clip((tx * self._abx + tz * self._abz) / self._denom, 0.0, 1.0)
        dx = tx - t * self._abx
        dz = tz - t * self._abz
        return float(np.min(dx * dx + dz * dz))

    def step_ok(self, p2: np.ndarray, q2: np.ndarray) -> bool:
        if not (self.lo[0] <= q2[0] <= self.hi[0] and self.lo[1] <= q2[1] <= self.hi[1]):
            return False
        if not self.segs.size:
            return True
        d2 = self._wall_dist2(q2)
        if d2 < self._clear2:
            return False
        # a step can only cross a wall if it ends within a step length of one
        step = math.hypot(q2[0] - p2[0], q2[1] - p2[1])
        if d2 > (WALK_CLEARANCE + step) ** 2:
            return True
        return not _crosses(p2, q2, self.segs)

    def random_free_point(self, rng: np.random.Generator, tries: int = 200) -> np.ndarray:
        for _ in range(tries):
            p = rng.uniform(self.lo, self.hi)
            if self.free(p):
                return p
        raise InfeasibleGeometryError("no free start point found")


# ----------------------------------------------------------------------
# generators


def _random_walk_2d(level: _LevelMap, n: int, dt: float, rng: np.random.Generator,
                    speed_mean: float, speed_cap: float,
                    speed_profile=None) -> tuple[np.ndarray, np.ndarray]:
    p = level.random_free_point(rng)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    omega = 0.0
    speed = speed_mean
    pts = np.empty((n, 2))
    yaws = np.empty(n)
    pts[0] = p
    yaws[0] = heading
    for k in range(1, n):
        omega = 0.92 * omega + rng.normal(0.0, 0.35)
        heading += omega * dt
        if speed_profile is not None:
            speed = speed_profile(k)
        else:
            speed = float(np.clip(speed + rng.normal(0.0, 0.05), 0.3, speed_cap))
        step = None
        for turn in (0.0, 0.6, -0.6, 1.2, -1.2, 2.0, -2.0, math.pi):
            h = heading + turn
            q = p + speed * dt * np.array([math.cos(h), math.sin(h)])
            if level.step_ok(p, q):
                step = q
                heading = h
                if turn:
                    omega = 0.0
                break
        if step is None:
            q = p  # boxed in: stand still this tick
        p = q
        pts[k] = p
        yaws[k] = heading
    return pts, yaws


def _lift(pts2: np.ndarray, y: float) -> np.ndarray:
    out = np.empty((len(pts2), 3))
    out[:, 0] = pts2[:, 0]
    out[:, 1] = y
    out[:, 2] = pts2[:, 1]
    return out


def _grid_path(level: _LevelMap, start: np.ndarray, goal: np.ndarray,
               res: float = 0.5) -> list[np.ndarray] | None:
    """A* shortest path on an occupancy grid; returns 2-D waypoints or None."""
    lo, hi = level.lo, level.hi
    nx = max(2, int(math.ceil((hi[0] - lo[0]) / res)))
    nz = max(2, int(math.ceil((hi[1] - lo[1]) / res)))

    def cell(p):
        return (min(nx - 1, max(0, int((p[0] - lo[0]) / res))),
                min(nz - 1, max(0, int((p[1] - lo[1]) / res))))

    def center(c):
        return np.array([lo[0] + (c[0] + 0.5) * res, lo[1] + (c[1] + 0.5) * res])

    free = {}

    def is_free(c):
        if c not in free:
            free[c] = level.free(center(c))
        return free[c]

    s, g = cell(start), cell(goal)
    if not is_free(g):
        return None
    frontier = [(0.0, s)]
    came: dict = {s: None}
    cost = {s: 0.0}
    moves = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
    while frontier:
        _, c = heapq.heappop(frontier)
        if c == g:
            path = []
            while c is not None:
                path.append(center(c))
                c = came[c]
            return path[::-1]
        for dx, dz in moves:
            n = (c[0] + dx, c[1] + dz)
            if not (0 <= n[0] < nx and 0 <= n[1] < nz) or not is_free(n):
                continue
            if dx and dz and not (is_free((c[0] + dx, c[1])) and is_free((c[0], c[1] + dz))):
                continue  # no corner cutting
            step = math.hypot(dx, dz) * res
            nc = cost[c] + step
            if nc < cost.get(n, math.inf):
                cost[n] = nc
                came[n] = c
                h = math.hypot(n[0] - g[0], n[1] - g[1]) * res
                heapq.heappush(frontier, (nc + h, n))
    return None


def _waypoint_walk(level: _LevelMap, n: int, dt: float, rng: np.random.Generator,
                   speed: float) -> tuple[np.ndarray, np.ndarray]:
    pts = np.empty((n, 2))
    yaws = np.empty(n)
    p = level.random_free_point(rng)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    path: list[np.ndarray] = []
    k = 0
    while k < n:
        if not path:
            for _ in range(20):
                goal = level.random_free_point(rng)
                found = _grid_path(level, p, goal)
                if found and len(found) > 1:
                    path = found[1:]
                    break
            if not path:
                pts[k:] = p
                yaws[k:] = heading
                break
        target = path[0]
        d = target - p
        dist = float(np.linalg.norm(d))
        if dist < speed * dt:
            p = target
            path.pop(0)
        else:
            heading = math.atan2(d[1], d[0])
            p = p + d / dist * speed * dt
        pts[k] = p
        yaws[k] = heading
        k += 1
    return pts, yaws


def _stress_profile(n: int, dt: float, rng: np.random.Generator):
    """Per-tick speed schedule alternating sprints, stops, and normal walking."""
    speeds = np.empty(n)
    k = 0
    while k < n:
        mode = rng.integers(0, 3)
        span = int(rng.uniform(1.0, 4.0) / dt)
        v = (4.5, 0.0, 1.3)[mode]
        speeds[k : k + span] = v
        k += span
    return speeds


def gen_trajectory(kind: str, building: BuildingModel, duration: float, seed,
                   node_id: int = 0, floor: int = 0, tick_hz: int = 60,
                   partner: Trajectory | None = None) -> Trajectory:
    """Generate one node's ground-truth trajectory.

    kind: random_walk | waypoint | pairs | stress. For 'pairs', pass the
    leader trajectory as `partner` to obtain the follower (separation stays
    under 2 m by construction); without a partner the leader itself is
    returned (a plain random walk).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = int(round(duration * tick_hz))
    if n < 1:
        raise ValueError("duration must cover at least one tick")
    dt = 1.0 / tick_hz
    floor_y = building.floor_heights[min(floor, len(building.floor_heights) - 1)]
    level = _LevelMap(building, floor_y)
    y = level.y
    v_max = 6.0 if kind == "stress" else 3.0

    if kind == "pairs" and partner is not None:
        delay = int(round(0.7 * tick_hz))
        idx = np.maximum(0, np.arange(n) - delay)
        pos = partner.positions[np.minimum(idx, len(partner) - 1)].copy()
        yaws = partner.yaws[np.minimum(idx, len(partner) - 1)].copy()
        return Trajectory(node_id, tick_hz, pos, yaws, v_max=partner.v_max)

    if kind in ("random_walk", "pairs"):
        pts, yaws = _random_walk_2d(level, n, dt, rng, speed_mean=1.2, speed_cap=2.2)
    elif kind == "waypoint":
        pts, yaws = _waypoint_walk(level, n, dt, rng, speed=1.3)
    elif kind == "stress":
        speeds = _stress_profile(n, dt, rng)
        pts, yaws = _random_walk_2d(level, n, dt, rng, speed_mean=1.3, speed_cap=5.0,
                                    speed_profile=lambda k: speeds[k])
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")

    positions = _lift(pts, y)
    if kind == "stress":
        positions[:, 1] += _hop_offsets(n, dt, rng)
    return Trajectory(node_id, tick_hz, positions, yaws, v_max=v_max)


def _hop_offsets(n: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Occasional short vertical hops for the stress pattern."""
    y = np.zeros(n)
    hop_ticks = int(0.4 / dt)
    k = int(rng.uniform(2.0, 6.0) / dt)
    while k + hop_ticks < n:
        tau = np.linspace(0.0, 1.0, hop_ticks)
        y[k : k + hop_ticks] += 0.25 * np.sin(math.pi * tau)
        k += hop_ticks + int(rng.uniform(3.0, 8.0) / dt)
    return y
