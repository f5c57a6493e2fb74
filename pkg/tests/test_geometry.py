import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mutloc.errors import GimbalLockWarning, InvalidPose, NearSingularRotation
from mutloc.geometry import (
    Pose2,
    Pose3,
    compose,
    euler_from_rotation,
    exp_hat,
    inverse,
    lift_se3,
    log_vee,
    map_origin_transform,
    project_se2,
    random_pose3,
    rotation_from_euler,
    se2_adjoint,
    se2_exp,
    se2_log,
    se2_right_jacobian,
    wrap_angle,
)

angles = st.floats(-50.0, 50.0, allow_nan=False)
coords = st.floats(-100.0, 100.0, allow_nan=False)
pose2s = st.builds(Pose2, coords, coords, angles)


def yaw_pose(theta, t=(0.0, 0.0, 0.0)):
    return Pose3.from_euler(0.0, 0.0, theta, t)


# -- SE(3) ---------------------------------------------------------------------


def test_identity_composition():
    t = random_pose3(np.random.default_rng(1))
    assert compose(Pose3.identity(), t).allclose(t)
    assert compose(t, inverse(t)).allclose(Pose3.identity())


def test_pure_translations_add():
    a = Pose3(translation=(1, 0, 0))
    b = Pose3(translation=(0, 2, 0))
    np.testing.assert_allclose(compose(a, b).translation, [1, 2, 0])


def test_inverse_simple_cases():
    assert inverse(Pose3.identity()).allclose(Pose3.identity())
    np.testing.assert_allclose(inverse(Pose3(translation=(1, 2, 3))).translation, [-1, -2, -3])
    assert inverse(yaw_pose(0.7)).allclose(yaw_pose(-0.7))


def test_log_of_identity_is_zero():
    np.testing.assert_array_equal(log_vee(Pose3.identity()), np.zeros(6))


def test_log_of_quarter_turn():
    v = log_vee(yaw_pose(math.pi / 2))
    np.testing.assert_allclose(v, [0, 0, 0, 0, 0, math.pi / 2], atol=1e-15)


def test_exp_log_round_trip_1000_random_poses():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        t = random_pose3(rng)
        back = exp_hat(log_vee(t))
        err = back.inverse().compose(t).matrix() - np.eye(4)
        worst = max(worst, float(np.max(np.abs(err))))
    assert worst < 1e-9


def test_exp_log_small_angles():
    for theta in (0.0, 1e-12, 1e-7, 1e-5, 2e-4):
        v = np.array([0.3, -0.2, 0.1, theta, -theta / 2, theta / 3])
        np.testing.assert_allclose(log_vee(exp_hat(v)), v, atol=1e-13)


def test_group_axioms_on_random_samples():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a, b, c = (random_pose3(rng) for _ in range(3))
        assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)))
        assert compose(a, Pose3.identity()).allclose(a)
        assert compose(inverse(a), a).allclose(Pose3.identity())


def test_log_near_pi_raises():
    with pytest.raises(NearSingularRotation):
        log_vee(yaw_pose(math.pi - 1e-8))


def test_non_orthonormal_rotation_rejected():
    r = np.eye(3)
    r[0, 1] = 1e-6
    with pytest.raises(InvalidPose):
        Pose3(r)
    with pytest.raises(InvalidPose):
        Pose3(np.diag([1.0, 1.0, -1.0]))


def test_pose3_is_read_only():
    t = Pose3(translation=(1, 2, 3))
    with pytest.raises(ValueError):
        t.translation[0] = 5.0


# -- Euler ---------------------------------------------------------------------


def test_euler_identity_and_yaw_only():
    assert euler_from_rotation(np.eye(3)) == (0.0, 0.0, 0.0)
    e = euler_from_rotation(rotation_from_euler(0, 0, math.radians(30)))
    np.testing.assert_allclose(e, [0, 0, math.radians(30)], atol=1e-15)


def test_euler_round_trip():
    want = np.radians([5.0, -3.0, 120.0])
    got = euler_from_rotation(rotation_from_euler(*want))
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_euler_is_zyx_product():
    roll, pitch, yaw = 0.2, -0.4, 1.1
    rx = np.array([[1, 0, 0], [0, math.cos(roll), -math.sin(roll)], [0, math.sin(roll), math.cos(roll)]])
    ry = np.array([[math.cos(pitch), 0, math.sin(pitch)], [0, 1, 0], [-math.sin(pitch), 0, math.cos(pitch)]])
    rz = np.array([[math.cos(yaw), -math.sin(yaw), 0], [math.sin(yaw), math.cos(yaw), 0], [0, 0, 1]])
    np.testing.assert_allclose(rotation_from_euler(roll, pitch, yaw), rz @ ry @ rx, atol=1e-15)


def test_gimbal_lock_warns():
    with pytest.warns(GimbalLockWarning):
        euler_from_rotation(rotation_from_euler(0.1, math.pi / 2, 0.3))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        euler_from_rotation(rotation_from_euler(0.1, 1.5, 0.3))


# -- projection ------------------------------------------------------------------


def test_project_planar_pose():
    p = project_se2(Pose3.from_euler(0, 0, 0.3, (1, 2, 0)))
    assert p.x == pytest.approx(1.0) and p.y == pytest.approx(2.0) and p.yaw == pytest.approx(0.3)


def test_lift_is_planar():
    t = lift_se3(Pose2(1, 2, 0.3))
    assert t.translation[2] == 0.0
    e = t.euler()
    assert e.roll == 0.0 and e.pitch == pytest.approx(0.0, abs=1e-16)


def test_projection_drops_roll():
    t = Pose3.from_euler(math.radians(9), 0, 0.5, (1, 1, 0))
    p = project_se2(t)
    assert p.yaw == pytest.approx(0.5)
    assert t.euler().roll == pytest.approx(math.radians(9))


@given(pose2s)
def test_project_after_lift_is_identity(p):
    q = project_se2(lift_se3(p))
    assert (q.x, q.y) == (p.x, p.y)
    assert q.yaw == pytest.approx(p.yaw, abs=1e-15)


# -- map origin chain ----------------------------------------------------------------


def test_map_origin_simple_cases():
    i = Pose3.identity()
    assert map_origin_transform(i, i, i).allclose(i)
    t = Pose3(translation=(4.5, 0, 0))
    assert map_origin_transform(i, t, i).allclose(t)


def test_map_origin_identity_on_random_frames():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        a, b, c = (random_pose3(rng) for _ in range(3))
        m = map_origin_transform(a, b, c)
        back = m.compose(c.inverse()).compose(b.inverse()).compose(a.inverse())
        assert back.allclose(Pose3.identity(), atol=1e-9)


# -- SE(2) ---------------------------------------------------------------------------


@given(angles)
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)


def test_wrap_angle_pi_maps_to_plus_pi():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi


@given(pose2s, pose2s)
def test_pose2_yaw_stays_normalized(a, b):
    for p in (a @ b, a.inverse(), a.between(b)):
        assert -math.pi < p.yaw <= math.pi


@given(pose2s, pose2s, pose2s)
def test_pose2_associative(a, b, c):
    np.testing.assert_allclose(((a @ b) @ c).matrix(), (a @ (b @ c)).matrix(), atol=1e-9)


def test_pose2_matches_matrix_product():
    a, b = Pose2(1.0, -2.0, 0.4), Pose2(0.3, 0.8, -2.9)
    np.testing.assert_allclose((a @ b).matrix(), a.matrix() @ b.matrix(), atol=1e-14)
    np.testing.assert_allclose(a.inverse().matrix(), np.linalg.inv(a.matrix()), atol=1e-14)


def test_se2_exp_log_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(500):
        v = np.concatenate([rng.normal(size=2), rng.uniform(-3.1, 3.1, size=1)])
        np.testing.assert_allclose(se2_log(se2_exp(v)), v, atol=1e-12)


def test_se2_right_jacobian_finite_differences():
    rng = np.random.default_rng(5)
    h = 1e-7
    for theta in (0.0, 1e-8, 0.3, -2.0):
        v = np.array([rng.normal(), rng.normal(), theta])
        jr = se2_right_jacobian(v)
        num = np.zeros((3, 3))
        for i in range(3):
            d = np.zeros(3)
            d[i] = h
            num[:, i] = se2_log(se2_exp(v).inverse() @ se2_exp(v + d)) / h
        np.testing.assert_allclose(jr, num, atol=1e-6)


def test_se2_adjoint_moves_twists():
    p = Pose2(0.7, -1.2, 0.9)
    xi = np.array([0.01, -0.02, 0.015])
    lhs = p @ se2_exp(xi) @ p.inverse()
    rhs = se2_exp(se2_adjoint(p) @ xi)
    np.testing.assert_allclose(lhs.as_array(), rhs.as_array(), atol=1e-14)
