import math

import numpy as np
import pytest

from mutloc.errors import EmptyModel, PredictorFailure
from mutloc.geometry import Pose3, project_se2
from mutloc.losses import point_matching_loss
from mutloc.refinement import (
    DampedNoisyOracle,
    ExactOracle,
    IdentityPredictor,
    RefinementConfig,
    RefinementContext,
    RobotModel,
    damped_noisy_oracle,
    initial_pose_sampler,
    refine,
    tangent_error,
)

MODEL = RobotModel.box(count=200, seed=0)
T_GT = Pose3.from_euler(0.0, 0.0, 0.4, (3.0, -0.5, 0.0))


def ctx(t_gt=T_GT):
    return RefinementContext(t_gt, MODEL)


def test_exact_oracle_converges_in_one_step():
    t0 = Pose3.from_euler(0.02, -0.01, 0.7, (3.2, -0.3, 0.05))
    t, trace = refine(t0, ExactOracle(), RefinementConfig(iterations=1), ctx())
    assert t.allclose(T_GT, atol=1e-12)
    assert trace.losses[-1] <= 1e-12


def test_identity_predictor_is_fixed_point():
    t0 = Pose3.from_euler(0, 0, 0.1, (1, 2, 0))
    t, trace = refine(t0, IdentityPredictor(), RefinementConfig(), ctx())
    assert t.allclose(t0, atol=0)
    assert len(trace.poses) == 5


def test_update_is_left_multiplication():
    t0 = initial_pose_sampler(T_GT, seed=1)
    t, trace = refine(t0, DampedNoisyOracle(0.5, 0.01, 0.01, seed=2), RefinementConfig(), ctx())
    acc = t0
    for d in trace.deltas:
        acc = d.compose(acc)
    assert acc.allclose(t, atol=1e-12)


def test_trace_losses_recompute():
    t0 = initial_pose_sampler(T_GT, seed=3)
    _, trace = refine(t0, DampedNoisyOracle(0.6), RefinementConfig(), ctx())
    for p, loss in zip(trace.poses, trace.losses):
        assert loss == point_matching_loss(p, T_GT, MODEL)


@pytest.mark.parametrize("seed", range(5))
def test_damped_oracle_halves_error(seed):
    rng = np.random.default_rng(seed)
    dyaw = math.radians(rng.uniform(-20, 20))
    t0 = Pose3.from_euler(0, 0, 0.4 + dyaw, (3.0 + rng.uniform(-0.3, 0.3), -0.5 + rng.uniform(-0.3, 0.3), 0))
    _, trace = refine(t0, damped_noisy_oracle(0.5), RefinementConfig(), ctx())
    norms = [np.linalg.norm(tangent_error(p, T_GT)) for p in trace.poses]
    for a, b in zip(norms[:-1], norms[1:]):
        assert b / a == pytest.approx(0.5, rel=0.1)
        assert b <= a


def test_yaw_error_after_four_iterations():
    t0 = Pose3.from_euler(0, 0, 0.4 + math.radians(20), T_GT.translation)
    t, _ = refine(t0, DampedNoisyOracle(0.5), RefinementConfig(iterations=4), ctx())
    err = math.degrees(abs(project_se2(t).yaw - project_se2(T_GT).yaw))
    assert err == pytest.approx(1.25, rel=1e-9)


def test_gamma_one_is_exact():
    t0 = initial_pose_sampler(T_GT, seed=4)
    t, _ = refine(t0, DampedNoisyOracle(1.0), RefinementConfig(iterations=1), ctx())
    assert t.allclose(T_GT, atol=1e-12)


def test_noisy_oracle_reproducible():
    t0 = initial_pose_sampler(T_GT, seed=5)
    a, _ = refine(t0, DampedNoisyOracle(0.6, 0.005, 0.005, seed=9), RefinementConfig(), ctx())
    b, _ = refine(t0, DampedNoisyOracle(0.6, 0.005, 0.005, seed=9), RefinementConfig(), ctx())
    assert a.allclose(b, atol=0)


def test_early_stop():
    t0 = initial_pose_sampler(T_GT, seed=6)
    _, trace = refine(t0, ExactOracle(), RefinementConfig(iterations=10, early_stop=True), ctx())
    assert len(trace.deltas) == 2


def test_predictor_failure_carries_iteration():
    def broken(t, c, it):
        if it == 2:
            raise RuntimeError("boom")
        return Pose3.identity()

    with pytest.raises(PredictorFailure) as info:
        refine(Pose3.identity(), broken, RefinementConfig(), ctx())
    assert info.value.iteration == 2


def test_initial_pose_sampler_statistics():
    gt = Pose3.from_euler(0, 0, 0.2, (2.0, 1.0, 0.0))
    base = project_se2(gt)
    d = []
    for s in range(10_000):
        p = project_se2(initial_pose_sampler(gt, seed=s))
        d.append((p.x - base.x, p.y - base.y, math.remainder(p.yaw - base.yaw, 2 * math.pi)))
    sd = np.std(np.array(d), axis=0)
    np.testing.assert_allclose(sd, [0.15, 0.15, math.radians(20)], rtol=0.05)


def test_initial_pose_sampler_deterministic_and_zero_noise():
    assert initial_pose_sampler(T_GT, seed=7).allclose(initial_pose_sampler(T_GT, seed=7), atol=0)
    assert initial_pose_sampler(T_GT, seed=7, sigma_xy=0, sigma_yaw=0).allclose(T_GT, atol=1e-15)


def test_robot_model(tmp_path):
    assert MODEL.count == 200
    assert MODEL.radius > 0.2
    p = tmp_path / "m.xyz"
    p.write_text("0 0 0\n1 0 0\n# c\n0 1 0\n")
    assert RobotModel.load(p).count == 3
    with pytest.raises(EmptyModel):
        RobotModel(np.zeros((0, 3)))
