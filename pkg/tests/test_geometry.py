import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from peerloc.geometry import (
    BehindCameraError,
    CameraIntrinsics,
    Pose6DoF,
    RelState,
    Vec3,
    compose,
    invert,
    normalize_angle,
    project,
    relative_position,
    rotate_yaw,
)

CAMERA = CameraIntrinsics(f_x=1000.0, f_y=1000.0, c_x=640.0, c_y=360.0, h_x=1280.0, h_y=720.0)

finite = st.floats(min_value=-100.0, max_value=100.0, allow_nan=False)
angles = st.floats(min_value=-20.0, max_value=20.0, allow_nan=False)


def random_pose(rng):
    yaw = rng.uniform(0, 2 * math.pi)
    return Pose6DoF.from_yaw(yaw, Vec3(*rng.uniform(-5, 5, 3)))


class TestCompose:
    def test_identity_left(self):
        p = Pose6DoF.from_yaw(0.7, Vec3(1.0, 2.0, 3.0))
        q = compose(Pose6DoF.identity(), p)
        assert np.allclose(q.rotation, p.rotation)
        assert np.allclose(q.translation.to_array(), p.translation.to_array())

    def test_inverse_roundtrip(self):
        p = Pose6DoF.from_yaw(1.1, Vec3(0.5, -1.0, 2.0))
        q = compose(p, invert(p))
        assert np.allclose(q.rotation, np.eye(3), atol=1e-9)
        assert np.allclose(q.translation.to_array(), 0.0, atol=1e-9)

    def test_translations_commute(self):
        a = Pose6DoF(np.eye(3), Vec3(1.0, 0.0, 0.0))
        b = Pose6DoF(np.eye(3), Vec3(0.0, 2.0, 0.0))
        assert np.allclose(compose(a, b).translation.to_array(), [1.0, 2.0, 0.0])

    def test_action_order(self):
        # compose(a, b) applies a first, then b
        a = Pose6DoF.from_yaw(math.pi / 2)
        b = Pose6DoF(np.eye(3), Vec3(1.0, 0.0, 0.0))
        p = compose(a, b).apply(Vec3(1.0, 0.0, 0.0))
        expected = b.apply(a.apply(Vec3(1.0, 0.0, 0.0)))
        assert np.allclose(p.to_array(), expected.to_array())


class TestInvert:
    def test_identity(self):
        q = invert(Pose6DoF.identity())
        assert np.allclose(q.matrix(), np.eye(4))

    def test_pure_translation(self):
        q = invert(Pose6DoF(np.eye(3), Vec3(1.0, -2.0, 3.0)))
        assert np.allclose(q.translation.to_array(), [-1.0, 2.0, -3.0])

    def test_yaw_translation_roundtrip(self):
        p = Pose6DoF.from_yaw(math.pi / 2, Vec3(2.0, 0.0, 1.0))
        q = compose(p, invert(p))
        assert np.allclose(q.matrix(), np.eye(4), atol=1e-9)

    def test_double_inverse(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            p = random_pose(rng)
            q = invert(invert(p))
            assert np.allclose(q.matrix(), p.matrix(), atol=1e-9)


class TestRelativePosition:
    def test_identity_display(self):
        v = relative_position(Pose6DoF.identity(), Vec3(1.0, 2.0, 3.0))
        assert np.allclose(v.to_array(), [1.0, 2.0, 3.0])

    def test_translated_display(self):
        display = Pose6DoF(np.eye(3), Vec3(1.0, 0.0, 0.0))
        v = relative_position(display, Vec3(1.0, 0.0, 0.0))
        assert np.allclose(v.to_array(), 0.0, atol=1e-12)

    def test_matches_matrix_oracle(self):
        # independent check: invert the homogeneous 4x4 and multiply
        rng = np.random.default_rng(3)
        for _ in range(25):
            display = random_pose(rng)
            point = Vec3(*rng.uniform(-10, 10, 3))
            got = relative_position(display, point).to_array()
            m = np.linalg.inv(display.matrix())
            exp = (m @ np.append(point.to_array(), 1.0))[:3]
            assert np.allclose(got, exp, atol=1e-9)

    def test_own_position_maps_to_origin(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            display = random_pose(rng)
            v = relative_position(display, display.translation)
            assert np.allclose(v.to_array(), 0.0, atol=1e-9)


class TestProject:
    def test_optical_axis(self):
        u, v = project(CAMERA, Vec3(0.0, 0.0, -2.0))
        assert (u, v) == (640.0, 360.0)

    def test_lateral_offset(self):
        u, v = project(CAMERA, Vec3(1.0, 0.0, -2.0))
        assert u == pytest.approx(1140.0)
        assert v == pytest.approx(360.0)

    def test_behind_camera(self):
        with pytest.raises(BehindCameraError):
            project(CAMERA, Vec3(0.0, 0.0, 1.0))
        with pytest.raises(BehindCameraError):
            project(CAMERA, Vec3(0.0, 0.0, 0.0))

    def test_v_measured_downward(self):
        # a point above the axis lands above the principal point (smaller v)
        _, v = project(CAMERA, Vec3(0.0, 1.0, -2.0))
        assert v < 360.0

    @given(finite, finite, st.floats(min_value=0.1, max_value=50.0),
           st.floats(min_value=0.1, max_value=10.0))
    def test_projective_invariance(self, x, y, depth, scale):
        u1, v1 = project(CAMERA, Vec3(x, y, -depth))
        u2, v2 = project(CAMERA, Vec3(x * scale, y * scale, -depth * scale))
        assert u1 == pytest.approx(u2, abs=1e-6)
        assert v1 == pytest.approx(v2, abs=1e-6)


class TestRotateYaw:
    def test_zero_angle(self):
        v = rotate_yaw(Vec3(1.0, 2.0, 3.0), 0.0)
        assert np.allclose(v.to_array(), [1.0, 2.0, 3.0])

    def test_quarter_turn(self):
        v = rotate_yaw(Vec3(1.0, 0.0, 0.0), math.pi / 2)
        assert np.allclose(v.to_array(), [0.0, 0.0, -1.0], atol=1e-12)

    @given(finite, finite, finite, angles)
    def test_norm_and_y_preserved(self, x, y, z, theta):
        v = rotate_yaw(Vec3(x, y, z), theta)
        assert v.y == y
        assert v.norm() == pytest.approx(Vec3(x, y, z).norm(), rel=1e-9, abs=1e-9)

    @given(finite, finite, finite, angles)
    def test_matches_update_equations(self, x, y, z, theta):
        v = rotate_yaw(Vec3(x, y, z), theta)
        assert v.x == pytest.approx(x * math.cos(theta) + z * math.sin(theta), abs=1e-9)
        assert v.z == pytest.approx(z * math.cos(theta) - x * math.sin(theta), abs=1e-9)


class TestRelState:
    @given(angles)
    def test_theta_normalized(self, theta):
        s = RelState(0.0, 0.0, 0.0, theta)
        assert 0.0 <= s.theta < 2.0 * math.pi
        assert math.isclose(math.cos(s.theta), math.cos(theta), abs_tol=1e-9)
        assert math.isclose(math.sin(s.theta), math.sin(theta), abs_tol=1e-9)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            RelState(math.nan, 0.0, 0.0, 0.0)

    @given(angles)
    def test_normalize_angle_range(self, theta):
        assert 0.0 <= normalize_angle(theta) < 2.0 * math.pi


class TestValidation:
    def test_pose_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            Pose6DoF(np.eye(3) * 1.1, Vec3(0.0, 0.0, 0.0))

    def test_pose_rejects_reflection(self):
        r = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            Pose6DoF(r, Vec3(0.0, 0.0, 0.0))

    def test_camera_rejects_bad_principal_point(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(f_x=100.0, f_y=100.0, c_x=-5.0, c_y=0.0, h_x=640.0, h_y=480.0)

    def test_vec3_rejects_nan(self):
        with pytest.raises(ValueError):
            Vec3(0.0, math.inf, 0.0)
