import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from peerloc.geometry import Vec3
from peerloc.particles import (
    ParticleSet,
    RangeMeasurement,
    RangeNoiseParams,
    SphericalShell,
    UndefinedThetaError,
    VioDelta,
    VioNoiseParams,
    range_likelihood,
    sample_shell,
    systematic_resample_indices,
)

NOISE0 = VioNoiseParams(0.0, 0.0)
RANGE_NOISE = RangeNoiseParams(sigma_r=0.3, p_nlos=0.1)


def delta(dx, dy, dz, node=1, seq=0):
    return VioDelta(dx, dy, dz, 1.0 / 60.0, node, seq)


def make_set(positions, thetas=None, weights=None, seed=0):
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    m = len(positions)
    thetas = np.zeros(m) if thetas is None else np.asarray(thetas, dtype=float)
    if weights is None:
        lw = np.full(m, -math.log(m))
    else:
        w = np.asarray(weights, dtype=float)
        with np.errstate(divide="ignore"):
            lw = np.log(w)
    return ParticleSet(positions, thetas, lw, np.random.default_rng(seed))


class TestPropagateVio:
    def test_zero_theta_shift(self):
        s = make_set(np.zeros((50, 3)))
        s.propagate_vio(delta(1.0, 0.0, 0.0), NOISE0)
        assert np.allclose(s.positions, [1.0, 0.0, 0.0])

    def test_quarter_turn_shift(self):
        s = make_set(np.zeros((50, 3)), thetas=np.full(50, math.pi / 2))
        s.propagate_vio(delta(1.0, 0.0, 0.0), NOISE0)
        assert np.allclose(s.positions, [0.0, 0.0, -1.0], atol=1e-12)

    def test_dy_passes_straight_through(self):
        s = make_set(np.zeros((10, 3)), thetas=np.linspace(0, 6, 10))
        s.propagate_vio(delta(0.0, 0.5, 0.0), NOISE0)
        assert np.allclose(s.positions[:, 1], 0.5)
        assert np.allclose(s.positions[:, [0, 2]], 0.0)

    def test_random_walk_spread(self):
        # per-axis spread grows as sqrt(t) * sigma under zero-delta updates
        sigma = 0.01
        steps = 1000
        s = make_set(np.zeros((4000, 3)))
        for k in range(steps):
            s.propagate_vio(delta(0.0, 0.0, 0.0, seq=k), VioNoiseParams(sigma, 0.0))
        expected = sigma * math.sqrt(steps)
        for axis in range(3):
            assert np.std(s.positions[:, axis]) == pytest.approx(expected, rel=0.15)

    def test_weights_unchanged(self):
        s = make_set(np.zeros((4, 3)), weights=[0.4, 0.3, 0.2, 0.1])
        before = s.weights.copy()
        s.propagate_vio(delta(1.0, 2.0, 3.0), VioNoiseParams(0.01, 0.01))
        assert np.allclose(s.weights, before)

    def test_zero_noise_is_deterministic_bijection(self):
        rng = np.random.default_rng(1)
        pos = rng.normal(size=(64, 3))
        thetas = rng.uniform(0, 2 * math.pi, 64)
        s = make_set(pos.copy(), thetas=thetas.copy())
        s.propagate_vio(delta(0.3, -0.1, 0.8), NOISE0)
        c, sn = np.cos(thetas), np.sin(thetas)
        expected = pos + np.stack([0.3 * c + 0.8 * sn, np.full(64, -0.1), 0.8 * c - 0.3 * sn], axis=1)
        assert np.allclose(s.positions, expected, atol=1e-12)


class TestPropagateDisplayMotion:
    def test_zero_delta_noop(self):
        s = make_set([[1.0, 2.0, 3.0]])
        s.propagate_display_motion(delta(0.0, 0.0, 0.0))
        assert np.allclose(s.positions, [1.0, 2.0, 3.0])

    def test_display_moves_relative_shifts_opposite(self):
        s = make_set([[5.0, 0.0, 0.0]])
        s.propagate_display_motion(delta(1.0, 0.0, 0.0))
        assert np.allclose(s.positions, [4.0, 0.0, 0.0])

    def test_roundtrip(self):
        s = make_set(np.random.default_rng(0).normal(size=(16, 3)))
        before = s.positions.copy()
        s.propagate_display_motion(delta(0.7, -0.2, 1.1))
        s.propagate_display_motion(delta(-0.7, 0.2, -1.1))
        assert np.allclose(s.positions, before, atol=1e-12)


class TestWeightRange:
    def meas(self, z):
        return RangeMeasurement(0, 1, z, 0.0)

    def test_inlier_factor(self):
        # particle at distance 5.5 from display, z=5.0: |0.5| <= 0.9 -> 0.9
        s = make_set([[5.5, 0.0, 0.0]])
        s.weight_range(Vec3(0.0, 0.0, 0.0), self.meas(5.0), RANGE_NOISE)
        assert np.allclose(s.weights, [1.0])  # single particle renormalizes to 1

    def test_two_particle_normalization(self):
        s = make_set([[5.5, 0.0, 0.0], [7.0, 0.0, 0.0]])
        s.weight_range(Vec3(0.0, 0.0, 0.0), self.meas(5.0), RANGE_NOISE)
        assert np.allclose(s.weights, [0.9, 0.1])

    def test_likelihood_values(self):
        assert range_likelihood(5.5, 5.0, RANGE_NOISE) == pytest.approx(0.9)
        assert range_likelihood(7.0, 5.0, RANGE_NOISE) == pytest.approx(0.1)

    def test_boundary_is_inlier(self):
        noise = RangeNoiseParams(sigma_r=0.25, p_nlos=0.1)
        assert range_likelihood(5.75, 5.0, noise) == pytest.approx(0.9)
        s = make_set([[5.75, 0.0, 0.0], [10.0, 0.0, 0.0]])
        s.weight_range(Vec3(0.0, 0.0, 0.0), self.meas(5.0), noise)
        assert np.allclose(s.weights, [0.9, 0.1])

    def test_degenerate_update_returns_zero_and_keeps_set(self):
        s = make_set([[10.0, 0.0, 0.0]], weights=[1.0])
        noise = RangeNoiseParams(sigma_r=0.1, p_nlos=0.0)
        mass = s.weight_range(Vec3(0.0, 0.0, 0.0), self.meas(5.0), noise)
        assert mass == 0.0
        assert np.allclose(s.weights, [1.0])

    def test_returns_inlier_mass(self):
        s = make_set([[5.0, 0.0, 0.0], [9.0, 0.0, 0.0]])
        mass = s.weight_range(Vec3(0.0, 0.0, 0.0), self.meas(5.0), RANGE_NOISE)
        assert mass == pytest.approx(0.5)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_weights_positive_and_normalized(self, seed):
        rng = np.random.default_rng(seed)
        s = make_set(rng.normal(scale=4.0, size=(50, 3)))
        s.weight_range(Vec3(0.0, 0.0, 0.0), self.meas(rng.uniform(0, 8)), RANGE_NOISE)
        assert np.all(s.weights > 0.0)
        assert np.sum(s.weights) == pytest.approx(1.0, abs=1e-9)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(9)
        pos = rng.normal(scale=4.0, size=(30, 3))
        perm = rng.permutation(30)
        a = make_set(pos)
        b = make_set(pos[perm])
        a.weight_range(Vec3(0.0, 0.0, 0.0), self.meas(3.0), RANGE_NOISE)
        b.weight_range(Vec3(0.0, 0.0, 0.0), self.meas(3.0), RANGE_NOISE)
        assert np.allclose(a.weights[perm], b.weights)

    def test_no_false_convergence_under_repeats(self):
        # repeated identical ranges must not shrink the posterior below the
        # window support: surviving spread stays >= 4 sigma_r wide
        noise = RangeNoiseParams(sigma_r=0.3, p_nlos=0.1)
        rng = np.random.default_rng(4)
        s = ParticleSet.init_from_first_range(2000, Vec3(0, 0, 0), 5.0, noise, 6.0, rng)
        for k in range(100):
            s.weight_range(Vec3(0.0, 0.0, 0.0), self.meas(5.0), noise)
            if s.effective_sample_size() < 1000:
                s.resample()
        d = np.linalg.norm(s.positions, axis=1)
        significant = s.weights > 1e-6 / len(s)
        width = d[significant].max() - d[significant].min()
        assert width >= 4.0 * noise.sigma_r


class TestEffectiveSampleSize:
    def test_uniform(self):
        s = make_set(np.zeros((100, 3)))
        assert s.effective_sample_size() == pytest.approx(100.0)

    def test_degenerate(self):
        s = make_set(np.zeros((10, 3)), weights=[1.0] + [0.0] * 9)
        assert s.effective_sample_size() == pytest.approx(1.0)

    def test_half_and_half(self):
        s = make_set(np.zeros((4, 3)), weights=[0.5, 0.5, 0.0, 0.0])
        assert s.effective_sample_size() == pytest.approx(2.0)


class TestResample:
    def test_uniform_weights_keeps_each_particle_once(self):
        pos = np.arange(30.0).reshape(10, 3)
        s = make_set(pos.copy())
        s.resample()
        got = sorted(map(tuple, s.positions))
        expected = sorted(map(tuple, pos))
        assert got == expected

    def test_single_survivor(self):
        pos = np.arange(30.0).reshape(10, 3)
        s = make_set(pos.copy(), weights=[1.0] + [0.0] * 9)
        s.resample()
        assert np.allclose(s.positions, pos[0])

    def test_survivor_counts_proportional_to_weights(self):
        # systematic resampling is unbiased: mean count ~ M * w over trials
        weights = np.array([0.5, 0.25, 0.15, 0.06, 0.04])
        m = len(weights)
        trials = 10000
        rng = np.random.default_rng(11)
        counts = np.zeros(m)
        for _ in range(trials):
            idx = systematic_resample_indices(weights, m, rng)
            counts += np.bincount(idx, minlength=m)
        mean_counts = counts / trials
        # per-trial count variance for systematic resampling is below
        # multinomial variance; use the multinomial bound for 3 SEs
        se = np.sqrt(weights * (1 - weights) * m / trials)
        assert np.all(np.abs(mean_counts - m * weights) <= 3 * se + 1e-9)

    def test_recovery_injection(self):
        s = make_set(np.zeros((200, 3)))
        shell = SphericalShell(Vec3(10.0, 0.0, 0.0), 2.0, 0.5, 3.0)
        s.resample(recovery_fraction=0.1, init_region=shell)
        d = np.linalg.norm(s.positions - [10.0, 0.0, 0.0], axis=1)
        injected = np.abs(d - 2.0) <= 0.5 + 1e-9
        assert np.count_nonzero(injected) == 20
        assert np.all(s.weights == pytest.approx(1.0 / 200))


class TestEstimate:
    def test_single_particle(self):
        s = make_set([[1.0, 2.0, 3.0]], thetas=[0.5])
        est = s.estimate()
        assert (est.x, est.y, est.z) == (1.0, 2.0, 3.0)
        assert est.theta == pytest.approx(0.5)

    def test_circular_mean_wraps(self):
        s = make_set(np.zeros((2, 3)), thetas=[math.radians(350), math.radians(10)])
        assert s.estimate().theta == pytest.approx(0.0, abs=1e-9)

    def test_antipodal_raises(self):
        s = make_set(np.zeros((2, 3)), thetas=[0.0, math.pi])
        with pytest.raises(UndefinedThetaError):
            s.estimate()

    def test_weighted_position(self):
        s = make_set([[0.0, 0.0, 0.0], [4.0, 0.0, 0.0]], weights=[0.25, 0.75])
        assert s.estimate().x == pytest.approx(3.0)


class TestInitFromFirstRange:
    NOISE = RangeNoiseParams(sigma_r=0.3, p_nlos=0.1)

    def test_all_on_shell(self):
        s = ParticleSet.init_from_first_range(2000, Vec3(1.0, 2.0, 3.0), 5.0, self.NOISE, 6.0, 0)
        d = np.linalg.norm(s.positions - [1.0, 2.0, 3.0], axis=1)
        assert np.all(np.abs(d - 5.0) <= 3 * self.NOISE.sigma_r + 1e-9)

    def test_zero_range_gives_ball(self):
        s = ParticleSet.init_from_first_range(500, Vec3(0.0, 0.0, 0.0), 0.0, self.NOISE, 6.0, 0)
        d = np.linalg.norm(s.positions, axis=1)
        assert np.all(d <= 3 * self.NOISE.sigma_r + 1e-9)

    def test_vertical_clipping(self):
        s = ParticleSet.init_from_first_range(2000, Vec3(0.0, 5.0, 0.0), 8.0, self.NOISE, 1.5, 0)
        assert np.all(np.abs(s.positions[:, 1] - 5.0) <= 1.5 + 1e-9)

    def test_uniform_weights_and_theta(self):
        s = ParticleSet.init_from_first_range(1000, Vec3(0.0, 0.0, 0.0), 5.0, self.NOISE, 6.0, 0)
        assert np.allclose(s.weights, 1e-3)
        # theta should span [0, 2pi) roughly uniformly
        assert stats.kstest(s.thetas / (2 * math.pi), "uniform").pvalue > 0.01

    def test_distance_distribution_matches_rejection_oracle(self):
        # oracle: uniform-in-volume rejection sampling from the bounding box
        noise = self.NOISE
        z, extent = 5.0, 2.0
        rng = np.random.default_rng(42)
        hi = z + 3 * noise.sigma_r
        lo = z - 3 * noise.sigma_r
        oracle = []
        while len(oracle) < 4000:
            p = rng.uniform(-hi, hi, size=(8000, 3))
            d = np.linalg.norm(p, axis=1)
            keep = (d >= lo) & (d <= hi) & (np.abs(p[:, 1]) <= extent)
            oracle.extend(d[keep].tolist())
        oracle = np.array(oracle[:4000])
        s = ParticleSet.init_from_first_range(4000, Vec3(0.0, 0.0, 0.0), z, noise, extent, 7)
        d = np.linalg.norm(s.positions, axis=1)
        assert stats.ks_2samp(d, oracle).pvalue > 0.01

    def test_planar_mode_when_extent_zero(self):
        s = ParticleSet.init_from_first_range(500, Vec3(0.0, 1.0, 0.0), 4.0, self.NOISE, 0.0, 0)
        assert np.all(s.positions[:, 1] == 1.0)


class TestShellSampling:
    def test_count_invariance_under_ops(self):
        s = ParticleSet.init_from_first_range(300, Vec3(0, 0, 0), 5.0, RANGE_NOISE, 6.0, 0)
        s.propagate_vio(delta(0.1, 0.0, 0.0), VioNoiseParams(0.01, 0.001))
        s.weight_range(Vec3(0, 0, 0), RangeMeasurement(0, 1, 5.0, 0.0), RANGE_NOISE)
        s.resample(0.02, SphericalShell(Vec3(0, 0, 0), 5.0, 0.9, 6.0))
        assert len(s) == 300

    def test_sample_shell_respects_extent(self):
        shell = SphericalShell(Vec3(0.0, 0.0, 0.0), 10.0, 1.0, 2.5)
        pts = sample_shell(shell, 3000, np.random.default_rng(0))
        assert np.all(np.abs(pts[:, 1]) <= 2.5)
        d = np.linalg.norm(pts, axis=1)
        assert np.all((d >= 9.0 - 1e-9) & (d <= 11.0 + 1e-9))
