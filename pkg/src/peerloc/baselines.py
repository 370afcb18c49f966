"""Comparison baselines replayed from a world event log.

Dead reckoning integrates each node's reported odometry from a known true
start pose, so its error is pure accumulated drift. The anchor oracle runs a
per-node particle filter in the global frame, propagated by that node's
odometry and weighted by its ranges to beacons with known positions; it
represents the infrastructure-based upper bound.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import rotate_yaw, Vec3
from .particles import (
    ParticleSet,
    RangeMeasurement,
    RangeNoiseParams,
    SphericalShell,
    VioDelta,
    VioNoiseParams,
)


class NoAnchorsError(ValueError):
    """The anchor oracle needs at least one known beacon position."""


def _vio_rows(events, node: int):
    return [(e.time, np.array(e.values[:3], dtype=float))
            for e in events if e.kind == "vio" and e.src == node]


def vio_only_baseline(events, known_starts: dict) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Dead-reckoned world positions per node from its logged odometry totals.

    known_starts maps node -> (start_position (3,), start frame yaw). Returns
    node -> (times, positions) with positions in the world frame.
    """
    out = {}
    for node, (start, yaw0) in known_starts.items():
        rows = _vio_rows(events, node)
        start = np.asarray(start, dtype=float)
        times = np.array([0.0] + [t for t, _ in rows])
        positions = np.empty((len(rows) + 1, 3))
        positions[0] = start
        for i, (_, totals) in enumerate(rows):
            v = rotate_yaw(Vec3.from_array(totals), yaw0)
            positions[i + 1] = start + v.to_array()
        out[node] = (times, positions)
    return out


def series_at(series: tuple[np.ndarray, np.ndarray], t: float) -> np.ndarray | None:
    """Latest series sample at or before t (ground truth is never interpolated)."""
    times, positions = series
    i = int(np.searchsorted(times, t + 1e-9)) - 1
    if i < 0:
        return None
    return positions[i]


def anchor_oracle_baseline(
    events,
    anchor_positions: dict[int, np.ndarray],
    node_ids,
    noise: RangeNoiseParams = RangeNoiseParams(0.1, 0.1),
    vio_noise: VioNoiseParams = VioNoiseParams(0.02, 0.008),
    vertical_extent: float = 6.0,
    num_particles: int = 500,
    seed: int = 0,
    sample_times=None,
) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Global-frame particle filter per node against known-position beacons.

    Each node's filter is propagated by its own odometry (theta absorbs the
    unknown odometry-frame yaw) and weighted by its ranges to anchors. Returns
    node -> (times, positions) sampled at sample_times (default: every range).
    """
    if not anchor_positions:
        raise NoAnchorsError("anchor oracle requires at least one anchor")
    anchors = {a: np.asarray(p, dtype=float) for a, p in anchor_positions.items()}
    out = {}
    for node in node_ids:
        stream = []
        for e in events:
            if e.kind == "vio" and e.src == node:
                stream.append((e.time, 0, np.array(e.values[:3], dtype=float)))
            elif e.kind == "range":
                if e.src == node and e.dst in anchors:
                    stream.append((e.time, 1, (e.dst, float(e.values[0]))))
                elif e.dst == node and e.src in anchors:
                    stream.append((e.time, 1, (e.src, float(e.values[0]))))
        stream.sort(key=lambda r: (r[0], r[1]))
        times = sorted(sample_times) if sample_times is not None else \
            [t for t, kind, _ in stream if kind == 1]
        rng = np.random.default_rng(np.random.SeedSequence((seed, 40, node)))
        pf: ParticleSet | None = None
        last_totals = np.zeros(3)
        last_t = 0.0
        last_resample = 0.0
        est_times, est_pos = [], []
        ti = 0

        def snapshot(up_to: float):
            nonlocal ti
            while ti < len(times) and times[ti] <= up_to + 1e-9:
                if pf is not None:
                    est_times.append(times[ti])
                    est_pos.append(pf.position_mean())
                ti += 1

        for t, kind, payload in stream:
            snapshot(t - 1e-9)
            if kind == 0:
                d = payload - last_totals
                last_totals = payload
                dt = max(t - last_t, 1e-3)
                last_t = t
                if pf is not None:
                    pf.propagate_vio(VioDelta(d[0], d[1], d[2], dt, node, 0), vio_noise)
            else:
                anchor, z = payload
                apos = Vec3.from_array(anchors[anchor])
                if pf is None:
                    pf = ParticleSet.init_from_first_range(
                        num_particles, apos, z, noise, vertical_extent, rng)
                    last_resample = t
                    continue
                pf.weight_range(apos, RangeMeasurement(node, anchor, z, t), noise)
                if (pf.effective_sample_size() < 0.5 * len(pf)
                        or t - last_resample >= 5.0):
                    pf.resample(0.02, SphericalShell(apos, z, 3.0 * noise.sigma_r,
                                                     vertical_extent))
                    last_resample = t
        snapshot(math.inf)
        out[node] = (np.array(est_times), np.array(est_pos).reshape(-1, 3))
    return out
