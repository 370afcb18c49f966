"""Single-target 4-DoF particle filter over (x, y, z, theta).

Propagation follows the yaw-rotated odometry update (deltas reported in the
tracked node's own odometry frame, rotated into the observer's frame by each
particle's theta). Range weighting uses a uniform inlier window of +/-3
sigma_r with a floor probability for wrong (non-line-of-sight) ranges; the
flat window deliberately prevents repeated correlated ranges from collapsing
the posterior. Weights are kept in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .geometry import RelState, Vec3, normalize_angle

TWO_PI = 2.0 * math.pi


class UndefinedThetaError(ValueError):
    """Circular mean of theta is undefined (mean resultant length ~ 0)."""


@dataclass(frozen=True)
class VioDelta:
    """One odometry displacement report, in the reporting device's own frame."""

    dx: float
    dy: float
    dz: float
    dt: float
    source_node: int
    sequence: int

    def __post_init__(self):
        if not (self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dz)):
            raise ValueError("non-finite displacement")


@dataclass(frozen=True)
class VioNoiseParams:
    """Per-update Gaussian odometry noise (meters, radians)."""

    sigma_xyz: float
    sigma_theta: float

    def __post_init__(self):
        if self.sigma_xyz < 0 or self.sigma_theta < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class RangeNoiseParams:
    """UWB range error model: window half-width 3*sigma_r, outlier floor p_nlos."""

    sigma_r: float
    p_nlos: float

    def __post_init__(self):
        if not (self.sigma_r > 0.0):
            raise ValueError("sigma_r must be > 0")
        if not (0.0 <= self.p_nlos < 1.0):
            raise ValueError("p_nlos must be in [0, 1)")


@dataclass(frozen=True)
class RangeMeasurement:
    """One peer-to-peer distance measurement."""

    initiator: int
    responder: int
    range_z: float
    timestamp: float

    def __post_init__(self):
        if self.range_z < 0.0:
            raise ValueError("range must be >= 0")
        if self.initiator == self.responder:
            raise ValueError("initiator and responder must differ")


@dataclass(frozen=True)
class SphericalShell:
    """Shell |dist(center) - radius| <= half_width, vertically clipped.

    The clip band is |dy - y_offset| <= vertical_extent with dy measured from
    the center, so a sampler can be biased toward a known height band.
    vertical_extent == 0 degenerates to a planar annulus at center.y + y_offset.
    """

    center: Vec3
    radius: float
    half_width: float
    vertical_extent: float
    y_offset: float = 0.0


class Particle(NamedTuple):
    state: RelState
    log_weight: float


def range_likelihood(distance, range_z, noise: RangeNoiseParams):
    """Piecewise range model: 1 - p_nlos inside the +/-3 sigma_r window, else p_nlos.

    The boundary |distance - z| == 3 sigma_r counts as an inlier. Accepts
    scalars or arrays.
    """
    inlier = np.abs(np.asarray(distance, dtype=float) - range_z) <= 3.0 * noise.sigma_r
    return np.where(inlier, 1.0 - noise.p_nlos, noise.p_nlos)


def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(a - m))))


def systematic_resample_indices(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Low-variance (systematic) resampling: one uniform draw, stratified comb."""
    positions = (rng.uniform() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0  # guard against round-off excluding the last particle
    return np.searchsorted(cumulative, positions, side="right").clip(0, len(weights) - 1)


def sample_shell(shell: SphericalShell, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n points uniform-in-volume over the (clipped) shell; returns (n, 3)."""
    r_lo = max(0.0, shell.radius - shell.half_width)
    r_hi = shell.radius + shell.half_width
    c = shell.center.to_array()
    # keep the vertical band reachable from the shell
    y_off = min(max(shell.y_offset, -0.95 * r_hi), 0.95 * r_hi)
    if shell.vertical_extent <= 0.0:
        # planar annulus at the band height
        rho_lo2 = max(0.0, r_lo**2 - y_off**2)
        rho_hi2 = max(rho_lo2, r_hi**2 - y_off**2)
        rho = np.sqrt(rho_lo2 + rng.uniform(size=n) * (rho_hi2 - rho_lo2))
        phi = rng.uniform(0.0, TWO_PI, size=n)
        out = np.empty((n, 3))
        out[:, 0] = c[0] + rho * np.cos(phi)
        out[:, 1] = c[1] + y_off
        out[:, 2] = c[2] + rho * np.sin(phi)
        return out
    out = np.empty((n, 3))
    filled = 0
    while filled < n:
        m = n - filled
        r = np.cbrt(r_lo**3 + rng.uniform(size=m) * (r_hi**3 - r_lo**3))
        cos_el = rng.uniform(-1.0, 1.0, size=m)
        phi = rng.uniform(0.0, TWO_PI, size=m)
        y = r * cos_el
        keep = np.abs(y - y_off) <= shell.vertical_extent
        k = int(np.count_nonzero(keep))
        if k == 0:
            continue
        horiz = r[keep] * np.sqrt(1.0 - cos_el[keep] ** 2)
        out[filled : filled + k, 0] = c[0] + horiz * np.cos(phi[keep])
        out[filled : filled + k, 1] = c[1] + y[keep]
        out[filled : filled + k, 2] = c[2] + horiz * np.sin(phi[keep])
        filled += k
    return out


class ParticleSet:
    """Weighted particle cloud over (x, y, z, theta) with its own RNG stream.

    positions is (M, 3), thetas (M,), log_weights (M,) normalized so the
    linear weights sum to 1. All operations are deterministic given the seed.
    """

    __slots__ = ("positions", "thetas", "log_weights", "rng")

    def __init__(self, positions, thetas, log_weights, rng):
        self.positions = np.asarray(positions, dtype=float)
        self.thetas = np.asarray(thetas, dtype=float)
        self.log_weights = np.asarray(log_weights, dtype=float)
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be (M, 3)")
        if len(self) < 1:
            raise ValueError("particle set must be non-empty")
        self._normalize()

    def __len__(self) -> int:
        return self.positions.shape[0]

    def particle(self, i: int) -> Particle:
        p = self.positions[i]
        return Particle(
            RelState(p[0], p[1], p[2], normalize_angle(float(self.thetas[i]))),
            float(self.log_weights[i]),
        )

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def _normalize(self):
        self.log_weights = self.log_weights - _logsumexp(self.log_weights)

    @classmethod
    def uniform(cls, positions, thetas, rng) -> "ParticleSet":
        m = len(positions)
        return cls(positions, thetas, np.full(m, -math.log(m)), rng)

    @classmethod
    def init_from_first_range(
        cls,
        m: int,
        display_pos: Vec3,
        range_z: float,
        noise: RangeNoiseParams,
        vertical_extent: float,
        rng,
    ) -> "ParticleSet":
        """Seed the filter from a single range: shell of radius z +/- 3 sigma_r."""
        if range_z < 0.0:
            raise ValueError("range must be >= 0")
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        shell = SphericalShell(display_pos, range_z, 3.0 * noise.sigma_r, vertical_extent)
        positions = sample_shell(shell, m, rng)
        thetas = rng.uniform(0.0, TWO_PI, size=m)
        return cls.uniform(positions, thetas, rng)

    # ------------------------------------------------------------------
    # propagation

    def propagate_vio(self, delta: VioDelta, noise: VioNoiseParams):
        """Advance every particle by the target's odometry delta, rotated by its theta.

        x += dx cos(theta) + dz sin(theta); y += dy;
        z += dz cos(theta) - dx sin(theta); each axis gets N(0, sigma_xyz^2),
        theta gets N(0, sigma_theta^2) only. Weights are unchanged.
        """
        c = np.cos(self.thetas)
        s = np.sin(self.thetas)
        self.positions[:, 0] += delta.dx * c + delta.dz * s
        self.positions[:, 1] += delta.dy
        self.positions[:, 2] += delta.dz * c - delta.dx * s
        if noise.sigma_xyz > 0.0:
            self.positions += self.rng.normal(0.0, noise.sigma_xyz, size=self.positions.shape)
        if noise.sigma_theta > 0.0:
            self.thetas += self.rng.normal(0.0, noise.sigma_theta, size=len(self))
        self.thetas %= TWO_PI

    def propagate_display_motion(self, display_delta: VioDelta):
        """Deterministic frame shift: the observer moved, so relative states move by -delta."""
        self.positions[:, 0] -= display_delta.dx
        self.positions[:, 1] -= display_delta.dy
        self.positions[:, 2] -= display_delta.dz

    # ------------------------------------------------------------------
    # measurement

    def weight_range(self, display_pos: Vec3, meas: RangeMeasurement,
                     noise: RangeNoiseParams) -> float:
        """Multiply weights by the range likelihood and renormalize.

        Returns the prior-weighted inlier mass (the probability the update
        assigned to the window). With p_nlos == 0 and zero inlier mass the
        update would zero every weight; the set is then left unchanged
        (degenerate update) and 0.0 is returned.
        """
        diff = self.positions - display_pos.to_array()
        d2 = np.einsum("ij,ij->i", diff, diff)
        lo = max(0.0, meas.range_z - 3.0 * noise.sigma_r) ** 2
        hi = (meas.range_z + 3.0 * noise.sigma_r) ** 2
        inlier = (d2 >= lo) & (d2 <= hi)
        mass = float(np.sum(np.exp(self.log_weights[inlier])))
        if noise.p_nlos == 0.0 and mass == 0.0:
            return 0.0
        log_in = math.log(1.0 - noise.p_nlos)
        log_out = math.log(noise.p_nlos) if noise.p_nlos > 0.0 else -math.inf
        self.log_weights = self.log_weights + np.where(inlier, log_in, log_out)
        self._normalize()
        return mass

    def effective_sample_size(self) -> float:
        """1 / sum(w^2): M for uniform weights, 1 for a degenerate set."""
        return float(1.0 / np.sum(np.exp(2.0 * self.log_weights)))

    # ------------------------------------------------------------------
    # resampling and estimation

    def resample(self, recovery_fraction: float = 0.0, init_region: Optional[SphericalShell] = None):
        """Systematic resample to equal weights, optionally injecting fresh particles.

        A recovery_fraction share is replaced with draws from init_region
        (theta uniform), which lets the filter escape untracked state jumps.
        """
        if not (0.0 <= recovery_fraction < 1.0):
            raise ValueError("recovery_fraction must be in [0, 1)")
        m = len(self)
        idx = systematic_resample_indices(self.weights, m, self.rng)
        self.positions = self.positions[idx]
        self.thetas = self.thetas[idx]
        self.log_weights = np.full(m, -math.log(m))
        if init_region is not None and recovery_fraction > 0.0:
            n_new = int(m * recovery_fraction)
            if n_new > 0:
                slot = self.rng.permutation(m)[:n_new]
                self.positions[slot] = sample_shell(init_region, n_new, self.rng)
                self.thetas[slot] = self.rng.uniform(0.0, TWO_PI, size=n_new)

    def estimate(self) -> RelState:
        """Weighted mean position with a circular weighted mean for theta.

        Raises UndefinedThetaError when the theta distribution has no usable
        direction (mean resultant length < 1e-9, e.g. uniform or antipodal).
        """
        w = self.weights
        mean = w @ self.positions
        sin_m = float(w @ np.sin(self.thetas))
        cos_m = float(w @ np.cos(self.thetas))
        if math.hypot(sin_m, cos_m) < 1e-9:
            raise UndefinedThetaError("mean resultant length below 1e-9")
        theta = normalize_angle(math.atan2(sin_m, cos_m))
        return RelState(float(mean[0]), float(mean[1]), float(mean[2]), theta)

    def position_mean(self) -> np.ndarray:
        return self.weights @ self.positions

    def position_spread(self) -> float:
        """Weighted RMS distance from the position mean (scalar spread)."""
        mean = self.position_mean()
        d2 = np.sum((self.positions - mean) ** 2, axis=1)
        return float(np.sqrt(self.weights @ d2))

    def memory_bytes(self) -> int:
        return self.positions.nbytes + self.thetas.nbytes + self.log_weights.nbytes
