"""Per-node joint filter over the observer's own odometry drift and all targets.

The joint posterior is factorized: a small particle cloud tracks the
observer's accumulated positional odometry error ("display belief"), and one
4-DoF particle filter per remote node tracks that node conditioned on the
observer ("target beliefs"). Coupling is mean-field: target updates condition
on the observer's point estimate, while each range also reweights the
observer cloud by the expected range likelihood under the target's particle
distribution (estimated from a fixed-size subsample, keeping per-range cost
linear in both cloud sizes). Memory grows linearly with the number of
tracked nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose6DoF, RelState, Vec3, normalize_angle
from .particles import (
    ParticleSet,
    RangeMeasurement,
    RangeNoiseParams,
    SphericalShell,
    UndefinedThetaError,
    VioDelta,
    VioNoiseParams,
    systematic_resample_indices,
)


class ModeChangeAfterStartError(RuntimeError):
    """independent_mode may only be toggled before the first event."""


@dataclass(frozen=True)
class FilterConfig:
    # process noise is per applied update (remote deltas arrive as 10 Hz
    # batches) and must upper-bound the true odometry drift rate, including
    # the heading-drift-times-path-length term, or the filter cannot track
    m_display: int = 500
    m_target: int = 300
    vio_noise: VioNoiseParams = VioNoiseParams(0.02, 0.008)
    range_noise: RangeNoiseParams = RangeNoiseParams(0.1, 0.1)
    vertical_extent: float = 6.0
    display_sigma_xyz: float | None = 0.008  # per own-odometry update (60 Hz)
    ess_fraction: float = 0.5
    recovery_fraction: float = 0.02
    forced_resample_period: float = 5.0
    stale_range_s: float = 2.0
    delta_buffer_s: float = 5.0
    coupling_subsample: int = 32
    # kidnapped-state recovery: after `lost_streak` consecutive ranges whose
    # inlier mass falls below `lost_mass`, reseed `lost_recovery_fraction` of
    # the cloud from the measurement shell (theta uniform)
    lost_mass: float = 0.05
    lost_streak: int = 3
    lost_recovery_fraction: float = 0.3


class DisplayBelief:
    """Particle cloud over the observer's positional drift correction (meters).

    Per-update process noise is accumulated as pending variance and only
    materialized when the cloud is next read (sums of independent Gaussians
    are one Gaussian, and odometry arrives far more often than ranges).
    """

    __slots__ = ("offsets", "log_weights", "rng", "_pending_var")

    def __init__(self, m: int, rng: np.random.Generator):
        self.offsets = np.zeros((m, 3))
        self.log_weights = np.full(m, -math.log(m))
        self.rng = rng
        self._pending_var = 0.0

    def __len__(self) -> int:
        return self.offsets.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def perturb(self, sigma: float):
        self._pending_var += sigma * sigma

    def flush_noise(self):
        if self._pending_var > 0.0:
            self.offsets += self.rng.normal(0.0, math.sqrt(self._pending_var),
                                            size=self.offsets.shape)
            self._pending_var = 0.0

    def reweight(self, likelihood: np.ndarray) -> bool:
        if not np.any(likelihood > 0.0):
            return False
        with np.errstate(divide="ignore"):
            lw = self.log_weights + np.log(likelihood)
        m = np.max(lw)
        self.log_weights = lw - (m + np.log(np.sum(np.exp(lw - m))))
        return True

    def effective_sample_size(self) -> float:
        return float(1.0 / np.sum(np.exp(2.0 * self.log_weights)))

    def resample(self):
        self.flush_noise()
        idx = systematic_resample_indices(self.weights, len(self), self.rng)
        self.offsets = self.offsets[idx]
        self.log_weights = np.full(len(self), -math.log(len(self)))

    def mean(self) -> np.ndarray:
        self.flush_noise()
        return self.weights @ self.offsets

    def spread(self) -> float:
        self.flush_noise()
        d2 = np.sum((self.offsets - self.mean()) ** 2, axis=1)
        return float(np.sqrt(self.weights @ d2))

    def memory_bytes(self) -> int:
        return self.offsets.nbytes + self.log_weights.nbytes


@dataclass
class TargetBelief:
    node_id: int
    inner: ParticleSet
    last_update: float
    initialized: bool = True
    last_resample: float = 0.0
    outlier_streak: int = 0
    streak_range: float = math.nan
    seen_sequences: set = field(default_factory=set)


class JointFilter:
    """One node's view of the network: own drift plus every ranged neighbor.

    Events (own odometry, remote odometry, ranges) must arrive through a
    single ordered stream per filter. Given identical event streams and the
    same seed, two instances produce bit-identical estimates.
    """

    def __init__(self, self_id: int, config: FilterConfig = FilterConfig(), seed: int = 0):
        self.self_id = self_id
        self.config = config
        self.seed = seed
        self.display = DisplayBelief(config.m_display, self._stream("display"))
        self.targets: dict[int, TargetBelief] = {}
        self.raw_vio_position = np.zeros(3)
        self.filter_time = 0.0
        self.stale_range_count = 0
        self.degenerate_update_count = 0
        self._coupling_rng = self._stream("coupling")
        self._independent = False
        self._started = False
        self._pending: dict[int, list[tuple[float, VioDelta]]] = {}
        self._msg_state: dict[int, tuple[int, float, np.ndarray]] = {}
        self._buf = None

    def _stream(self, name, node_id: int = -1) -> np.random.Generator:
        key = {"display": 1, "coupling": 2, "target": 3}[name]
        return np.random.default_rng(np.random.SeedSequence((self.seed, key, node_id + 1)))

    # ------------------------------------------------------------------
    # configuration

    def independent_mode(self, enabled: bool):
        """Disable the observer-side range update (the naive per-target baseline)."""
        if self._started:
            raise ModeChangeAfterStartError("independent_mode must be set before the first event")
        self._independent = enabled

    @property
    def independent(self) -> bool:
        return self._independent

    @property
    def raw_vio_pose(self) -> Pose6DoF:
        return Pose6DoF(np.eye(3), Vec3.from_array(self.raw_vio_position))

    def display_estimate(self) -> Vec3:
        """Drift-corrected observer position in its odometry-origin frame."""
        return Vec3.from_array(self.raw_vio_position + self.display.mean())

    def display_drift_estimate(self) -> np.ndarray:
        return self.display.mean()

    # ------------------------------------------------------------------
    # events

    def _touch(self, t: float):
        self._started = True
        if t > self.filter_time:
            self.filter_time = t

    def on_vio_self(self, delta: VioDelta, t: float | None = None):
        """Advance the raw odometry pose; the drift cloud absorbs its noise."""
        if delta.source_node != self.self_id:
            raise ValueError("on_vio_self requires a delta from this node")
        self._touch(self.filter_time if t is None else t)
        self.raw_vio_position += (delta.dx, delta.dy, delta.dz)
        sigma = self.config.display_sigma_xyz
        self.display.perturb(self.config.vio_noise.sigma_xyz if sigma is None else sigma)

    def on_vio_remote(self, delta: VioDelta, t: float | None = None):
        """Propagate the sender's belief; unknown senders are buffered until ranged."""
        self._touch(self.filter_time if t is None else t)
        belief = self.targets.get(delta.source_node)
        if belief is None:
            buf = self._pending.setdefault(delta.source_node, [])
            buf.append((self.filter_time, delta))
            cutoff = self.filter_time - self.config.delta_buffer_s
            self._pending[delta.source_node] = [(at, d) for at, d in buf if at >= cutoff]
            return
        if delta.sequence in belief.seen_sequences:
            return
        belief.seen_sequences.add(delta.sequence)
        belief.inner.propagate_vio(delta, self.config.vio_noise)
        belief.last_update = self.filter_time

    def on_peer_message(self, msg, t: float | None = None):
        """Consume a wire-format state update (running odometry totals).

        Consecutive totals are differenced into a VioDelta, so dropped or
        reordered messages are covered by the next one that arrives; messages
        at or below the last applied sequence are redundant and ignored.
        """
        state = self._msg_state.get(msg.source)
        if state is None:
            # first contact fixes the totals baseline; motion before it is
            # unknowable and absorbed by the first range initialization
            self._msg_state[msg.source] = (msg.sequence, msg.timestamp, msg.totals())
            self._touch(self.filter_time if t is None else t)
            return
        last_seq, last_ts, last_totals = state
        if msg.sequence <= last_seq or msg.timestamp <= last_ts:
            self._touch(self.filter_time if t is None else t)
            return
        d = msg.totals() - last_totals
        self._msg_state[msg.source] = (msg.sequence, msg.timestamp, msg.totals())
        delta = VioDelta(float(d[0]), float(d[1]), float(d[2]),
                         msg.timestamp - last_ts, msg.source, msg.sequence)
        self.on_vio_remote(delta, t)

    def on_range(self, meas: RangeMeasurement):
        """Joint range update: initialize or reweight the target, then the observer.

        Every range constrains both endpoints, so (unless running in
        independent mode) the observer's drift cloud is reweighted by the
        expected likelihood of the measured range under the target's current
        particle distribution.
        """
        if self.self_id == meas.initiator:
            remote = meas.responder
        elif self.self_id == meas.responder:
            remote = meas.initiator
        else:
            raise ValueError("range does not involve this node")
        if meas.timestamp < self.filter_time - self.config.stale_range_s:
            self.stale_range_count += 1
            return
        self._touch(meas.timestamp)
        cfg = self.config
        display_pos = self.display_estimate()
        belief = self.targets.get(remote)
        if belief is None:
            inner = ParticleSet.init_from_first_range(
                cfg.m_target, display_pos, meas.range_z, cfg.range_noise,
                cfg.vertical_extent, self._stream("target", remote),
            )
            belief = TargetBelief(remote, inner, self.filter_time, last_resample=self.filter_time)
            self.targets[remote] = belief
            for _, d in self._pending.pop(remote, []):
                self.on_vio_remote(d)
            return

        inlier_mass = belief.inner.weight_range(display_pos, meas, cfg.range_noise)
        if inlier_mass == 0.0:
            self.degenerate_update_count += 1
        belief.last_update = self.filter_time
        window = 3.0 * cfg.range_noise.sigma_r
        if inlier_mass < cfg.lost_mass:
            # only mutually consistent misses count toward a lost track;
            # non-LOS outliers scatter and keep resetting the streak
            if (math.isnan(belief.streak_range)
                    or abs(meas.range_z - belief.streak_range) <= 2.0 * window):
                belief.outlier_streak += 1
            else:
                belief.outlier_streak = 1
            belief.streak_range = meas.range_z
        else:
            belief.outlier_streak = 0
            belief.streak_range = math.nan

        if not self._independent:
            self._reweight_display(belief.inner, meas, cfg.range_noise)

        if belief.outlier_streak >= cfg.lost_streak:
            # the cloud has lost the target: rebuild mass on the measured
            # shell with the full vertical prior (a true reset)
            region = SphericalShell(display_pos, meas.range_z, window, cfg.vertical_extent)
            belief.inner.resample(cfg.lost_recovery_fraction, region)
            belief.outlier_streak = 0
            belief.last_resample = self.filter_time
            return
        ess = belief.inner.effective_sample_size()
        forced = self.filter_time - belief.last_resample >= cfg.forced_resample_period
        if ess < cfg.ess_fraction * len(belief.inner) or forced:
            # routine diversity injection keeps the cloud's consolidated
            # vertical band: gravity-aligned odometry pins relative height,
            # so only the shell direction needs re-exploration
            w = belief.inner.weights
            y = belief.inner.positions[:, 1]
            y_mean = float(w @ y)
            y_std = math.sqrt(max(float(w @ (y - y_mean) ** 2), 0.0))
            region = SphericalShell(
                display_pos, meas.range_z, window,
                min(cfg.vertical_extent, max(0.75, 2.0 * y_std)),
                y_offset=y_mean - display_pos.y,
            )
            belief.inner.resample(cfg.recovery_fraction, region)
            belief.last_resample = self.filter_time

    def _scratch(self, m: int, k: int):
        # reused (M_D, K) work buffers: these exceed the allocator's mmap
        # threshold, so fresh temporaries each range cost more than the math
        if self._buf is None or self._buf[0].shape != (m, k):
            self._buf = (np.empty((m, k)), np.empty((m, k), dtype=bool),
                         np.empty((m, k), dtype=bool))
        return self._buf

    def _reweight_display(self, inner: ParticleSet, meas: RangeMeasurement, noise: RangeNoiseParams):
        # Expected likelihood over the target's particles, estimated from a
        # fixed-size weighted subsample so per-range cost stays O(M_D + M_T).
        k = min(self.config.coupling_subsample, len(inner))
        if k == len(inner):
            sample = inner.positions
        else:
            idx = systematic_resample_indices(inner.weights, k, self._coupling_rng)
            sample = inner.positions[idx]  # (K, 3)
        self.display.flush_noise()
        display_positions = self.raw_vio_position + self.display.offsets  # (M_D, 3)
        # squared-distance window test via one matmul; |d - z| <= 3 sigma_r
        d2, in_lo, in_hi = self._scratch(len(self.display), k)
        np.matmul(display_positions, sample.T, out=d2)
        d2 *= -2.0
        d2 += np.einsum("ij,ij->i", display_positions, display_positions)[:, None]
        d2 += np.einsum("ij,ij->i", sample, sample)[None, :]
        lo = max(0.0, meas.range_z - 3.0 * noise.sigma_r) ** 2
        hi = (meas.range_z + 3.0 * noise.sigma_r) ** 2
        np.greater_equal(d2, lo, out=in_lo)
        np.less_equal(d2, hi, out=in_hi)
        in_lo &= in_hi
        inlier_frac = np.count_nonzero(in_lo, axis=1) / k
        lik = inlier_frac * (1.0 - noise.p_nlos) + (1.0 - inlier_frac) * noise.p_nlos
        if not self.display.reweight(lik):
            self.degenerate_update_count += 1
            return
        if self.display.effective_sample_size() < self.config.ess_fraction * len(self.display):
            self.display.resample()

    # ------------------------------------------------------------------
    # output

    def joint_estimate(self) -> dict[int, RelState]:
        """Point estimates per initialized target, relative to the corrected observer pose."""
        origin = self.raw_vio_position + self.display.mean()
        out: dict[int, RelState] = {}
        for node_id in sorted(self.targets):
            belief = self.targets[node_id]
            if not belief.initialized:
                continue
            inner = belief.inner
            mean = inner.position_mean()
            try:
                theta = inner.estimate().theta
            except UndefinedThetaError:
                theta = 0.0  # no usable yaw direction yet
            out[node_id] = RelState(
                float(mean[0] - origin[0]),
                float(mean[1] - origin[1]),
                float(mean[2] - origin[2]),
                normalize_angle(theta),
            )
        return out

    def memory_bytes(self) -> int:
        total = self.display.memory_bytes()
        for belief in self.targets.values():
            total += belief.inner.memory_bytes()
        return total
