import math

import numpy as np
import pytest

from mutloc.errors import EmptyBatch, EmptyModel, LengthMismatch, ShapeMismatch
from mutloc.geometry import Pose2, Pose3
from mutloc.losses import (
    LossWeights,
    PoseLabel,
    epe_flow_loss,
    localization_loss,
    mask_loss,
    observation_loss,
    point_matching_loss,
    refinement_loss,
    total_loss,
    weighted_sum,
)
from mutloc.refinement import RobotModel

SQUARE = np.array([[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0], [0, -1.0, 0]])


def test_bce_values():
    assert observation_loss([0.5, 0.5, 0.5], [1, 0, 1]) == pytest.approx(math.log(2), abs=1e-12)
    assert observation_loss([0.9, 0.2], [1, 0]) == pytest.approx(-(math.log(0.9) + math.log(0.8)) / 2, abs=1e-15)
    assert observation_loss([1.0, 0.0], [1, 0]) <= 1e-11


def test_bce_errors():
    with pytest.raises(EmptyBatch):
        observation_loss([], [])
    with pytest.raises(LengthMismatch):
        observation_loss([0.5], [1, 0])


def test_localization_loss_values():
    assert localization_loss([Pose2(1, 2, 0.3)], [Pose2(1, 2, 0.3)]) == 0.0
    assert localization_loss([(0.1, 0, 0)], [(0, 0, 0)]) == pytest.approx(0.01, abs=1e-15)
    assert localization_loss([(0, 0, 0.2)], [(0, 0, 0)]) == pytest.approx(0.12, abs=1e-15)


def test_localization_loss_does_not_wrap_yaw():
    # raw regression outputs: 359 deg vs 1 deg is a large error
    a = localization_loss([(0, 0, math.radians(359))], [(0, 0, math.radians(1))])
    assert a == pytest.approx(3 * math.radians(358) ** 2)


def test_localization_loss_permutation_invariant():
    rng = np.random.default_rng(0)
    pred, truth = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    perm = rng.permutation(6)
    assert localization_loss(pred, truth) == pytest.approx(localization_loss(pred[perm], truth[perm]), abs=1e-15)


def test_localization_loss_accepts_labels():
    lab = [PoseLabel(1, 0.5, 0.2, 0.1), PoseLabel(0)]
    assert localization_loss([(0.5, 0.2, 0.1), (0, 0, 0)], lab) == 0.0
    with pytest.raises(ValueError):
        PoseLabel(0, x=1.0)


def test_total_loss():
    assert total_loss(0.0, 0.0) == 0.0
    assert total_loss(math.log(2), 0.01) == pytest.approx(math.log(2) + 0.02, abs=1e-15)
    assert total_loss(0.1, 0.2) < total_loss(0.1, 0.21)
    assert total_loss(0.1, 0.2) < total_loss(0.11, 0.2)
    with pytest.raises(ValueError):
        LossWeights(pose=0)


def test_point_matching_values():
    model = RobotModel.box(count=100, seed=1)
    t = Pose3.from_euler(0.1, 0.2, 0.3, (1, 2, 3))
    assert point_matching_loss(t, t, model) == 0.0
    shifted = Pose3(t.rotation, t.translation + t.rotation @ np.zeros(3) + np.array([0.1, 0, 0]))
    assert point_matching_loss(shifted, t, model) == pytest.approx(0.1, abs=1e-12)


def test_point_matching_yaw_on_square():
    theta = math.radians(10)
    got = point_matching_loss(Pose3.from_euler(0, 0, theta), Pose3.identity(), SQUARE)
    c, s = math.cos(theta), math.sin(theta)
    rotated = SQUARE @ np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]).T
    want = np.mean(np.abs(rotated - SQUARE).sum(axis=1))
    assert got == pytest.approx(want, abs=1e-12)
    assert got == pytest.approx((1 - c) + s, abs=1e-12)


def test_point_matching_properties():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(30, 3))
    a, b = Pose3.from_euler(0.1, 0, 0.4, (0.3, 0, 1)), Pose3.identity()
    assert point_matching_loss(a, b, pts) == pytest.approx(point_matching_loss(a, b, pts[rng.permutation(30)]))
    l1 = point_matching_loss(Pose3(translation=(0.1, -0.2, 0.05)), b, pts)
    l2 = point_matching_loss(Pose3(translation=(0.2, -0.4, 0.1)), b, pts)
    assert l2 == pytest.approx(2 * l1, abs=1e-12)
    with pytest.raises(EmptyModel):
        point_matching_loss(a, b, np.zeros((0, 3)))


def test_mask_loss_values():
    y = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert mask_loss(np.zeros((2, 2)), y) == pytest.approx(math.log(2), abs=1e-15)
    assert mask_loss(np.where(y > 0, 1e6, -1e6), y) <= 1e-11
    z = np.array([[2.0, -1.0], [0.0, 3.0]])
    t = np.array([[1.0, 0.0], [1.0, 0.0]])
    want = (math.log1p(math.exp(-2)) + math.log1p(math.exp(-1)) + math.log(2) + math.log1p(math.exp(3))) / 4
    assert mask_loss(z, t) == pytest.approx(want, abs=1e-15)
    with pytest.raises(ShapeMismatch):
        mask_loss(z, t[:1])


def test_epe_values():
    rng = np.random.default_rng(3)
    f = rng.normal(size=(2, 4, 5))
    assert epe_flow_loss(f, f) == 0.0
    off = f + np.array([3.0, 4.0])[:, None, None]
    assert epe_flow_loss(off, f) == pytest.approx(5.0, abs=1e-12)
    g = rng.normal(size=(2, 4, 5))
    naive = np.mean([math.hypot(f[0, i, j] - g[0, i, j], f[1, i, j] - g[1, i, j]) for i in range(4) for j in range(5)])
    assert epe_flow_loss(f, g) == pytest.approx(naive, abs=1e-12)
    with pytest.raises(ShapeMismatch):
        epe_flow_loss(f[:1], g[:1])


def test_weighted_sum():
    assert weighted_sum([1.0, 2.0, 3.0]) == 6.0
    assert weighted_sum([1.0, 2.0], [0.5, 2.0]) == 4.5
    assert refinement_loss(0.1, 0.2, 0.3, (1, 0, 2)) == pytest.approx(0.7)
    with pytest.raises(LengthMismatch):
        weighted_sum([1.0], [1.0, 2.0])
