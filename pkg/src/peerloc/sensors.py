"""Sensor models: drifting visual-inertial odometry and noisy UWB ranging.

A device reports frame-to-frame displacements in its own odometry frame. That
frame starts yawed by the device's initial heading and slowly rotates as yaw
drift accumulates (a random walk at sigma_theta per tick), so the reported
deltas both carry additive Gaussian noise and are expressed in a slowly
warping frame. Integrated error therefore grows like a random walk, which is
what the filters must correct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .particles import RangeNoiseParams, VioDelta, VioNoiseParams
from .trajectory import Trajectory


@dataclass(frozen=True)
class UwbModel:
    """World-side range generation (the filter only sees its own window model).

    sigma_r may be zero for exact ranging. Under NLOS the outlier probability
    is inflated (factor * p_nlos, capped) and outliers are positively biased:
    multipath lengthens flight paths, so they always exceed the true distance.
    Non-outlier NLOS samples get sigma inflated by nlos_sigma_factor.
    """

    sigma_r: float = 0.1
    p_nlos: float = 0.1
    nlos_outlier_factor: float = 3.0
    nlos_outlier_cap: float = 0.5
    nlos_outlier_mean_m: float = 3.0
    nlos_sigma_factor: float = 2.0
    radio_radius: float | None = 60.0

    def __post_init__(self):
        if self.sigma_r < 0 or not (0.0 <= self.p_nlos < 1.0):
            raise ValueError("invalid UWB model parameters")

    def noise_params(self) -> RangeNoiseParams:
        """Filter-facing parameters (window width must be positive)."""
        return RangeNoiseParams(max(self.sigma_r, 1e-3), self.p_nlos)


def sample_uwb_range(true_dist: float, nlos: bool, model: UwbModel, rng) -> float | None:
    """Draw one range; returns None when the pair is out of radio range."""
    if true_dist < 0:
        raise ValueError("true_dist must be >= 0")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if model.radio_radius is not None and true_dist > model.radio_radius:
        return None
    if nlos:
        p_out = min(model.nlos_outlier_factor * model.p_nlos, model.nlos_outlier_cap)
        if rng.uniform() < p_out:
            return true_dist + rng.exponential(model.nlos_outlier_mean_m)
        sigma = model.nlos_sigma_factor * model.sigma_r
    else:
        sigma = model.sigma_r
    if sigma == 0.0:
        return true_dist
    return max(0.0, true_dist + rng.normal(0.0, sigma))


class VioSensor:
    """Precomputed noisy odometry stream for one trajectory.

    delta(k) is the reported displacement covering tick k-1 -> k, expressed in
    the device's (drifting) odometry frame. totals(k) is the running sum of
    reported deltas, i.e. the raw odometry position at tick k. vio_yaw(k) is
    the world yaw of the odometry frame, needed to map ground truth into it.
    """

    def __init__(self, traj: Trajectory, noise: VioNoiseParams, seed):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.traj = traj
        self.node_id = traj.node_id
        n = len(traj)
        world_deltas = np.diff(traj.positions, axis=0)  # (n-1, 3)
        if noise.sigma_theta > 0.0 and n > 1:
            drift = np.cumsum(rng.normal(0.0, noise.sigma_theta, n - 1))
        else:
            drift = np.zeros(max(n - 1, 0))
        self._frame_yaw = np.concatenate(([0.0], drift)) + traj.yaws[0]
        psi = self._frame_yaw[1:]  # frame yaw applied to each delta
        c, s = np.cos(psi), np.sin(psi)
        reported = np.empty_like(world_deltas)
        # world -> frame coordinates: rotate by -psi about vertical y
        reported[:, 0] = world_deltas[:, 0] * c - world_deltas[:, 2] * s
        reported[:, 1] = world_deltas[:, 1]
        reported[:, 2] = world_deltas[:, 2] * c + world_deltas[:, 0] * s
        if noise.sigma_xyz > 0.0 and len(reported):
            reported += rng.normal(0.0, noise.sigma_xyz, size=reported.shape)
        self._reported = reported
        self._totals = np.vstack([np.zeros(3), np.cumsum(reported, axis=0)]) if n > 1 \
            else np.zeros((1, 3))

    def delta(self, k: int) -> VioDelta:
        if not (1 <= k < len(self.traj)):
            raise IndexError(f"tick {k} out of range")
        d = self._reported[k - 1]
        return VioDelta(float(d[0]), float(d[1]), float(d[2]), self.traj.dt,
                        self.node_id, k)

    def totals(self, k: int) -> np.ndarray:
        """Raw odometry position at tick k (sum of reported deltas)."""
        return self._totals[k]

    def vio_yaw(self, k: int) -> float:
        return float(self._frame_yaw[min(k, len(self._frame_yaw) - 1)])

    def initial_yaw(self) -> float:
        return float(self.traj.yaws[0])


def vio_measure(traj: Trajectory, t: float, noise: VioNoiseParams, seed) -> VioDelta:
    """One-shot convenience: the reported delta at time t on the tick grid."""
    k = int(round(t * traj.tick_hz))
    return VioSensor(traj, noise, seed).delta(k)
