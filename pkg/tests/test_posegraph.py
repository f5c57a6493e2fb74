import math

import numpy as np
import pytest

from mutloc.errors import AllObservationsRejected, EmptyLog, NotConnected
from mutloc.geometry import Pose2, Pose3, lift_se3, se2_exp, wrap_angle
from mutloc.posegraph import (
    A_OBSERVED,
    B_OBSERVED,
    MUTUAL,
    ODOM,
    Edge,
    InfoParams,
    PoseGraph,
    RendezvousLog,
    RendezvousObservation,
    Vertex,
    construct_pose_graph,
    delete_erroneous_nodes,
    edge_jacobians,
    edge_residual,
    graph_cost,
    information_matrix,
    mutual_information_quantity,
    optimize,
    run_pose_graph,
)

from oracles import derivative_free_solution, four_vertex_graph, random_log


def one_obs_log(roll_deg=0.0, pitch_deg=0.0, direction=A_OBSERVED):
    t_ref = Pose3.from_euler(math.radians(roll_deg), math.radians(pitch_deg), 0.2, (3.0, 0.5, 0.0))
    log = RendezvousLog()
    log.add(RendezvousObservation(1, t_ref, lift_se3(Pose2(1, 0, 0)), Pose3.identity(), direction))
    return log


def max_pose_diff(a: Pose2, b: Pose2) -> float:
    return max(abs(a.x - b.x), abs(a.y - b.y), abs(wrap_angle(a.yaw - b.yaw)))


# -- gating ---------------------------------------------------------------------------


def test_planar_observations_all_kept():
    log, _, _ = random_log(3, 2, seed=0)
    kept, report = delete_erroneous_nodes(log)
    assert len(kept) == 5 and report.removed == []


def test_pitch_outlier_removed():
    with pytest.raises(AllObservationsRejected) as info:
        delete_erroneous_nodes(one_obs_log(pitch_deg=15.0))
    assert info.value.report.removed_indices == [1]
    assert info.value.report.removed[0][2] == pytest.approx(15.0)


def test_gate_is_strict():
    kept, report = delete_erroneous_nodes(one_obs_log(roll_deg=9.9))
    assert len(kept) == 1 and not report.removed


def test_gate_mixed_log():
    log, _, _ = random_log(4, 4, seed=1)
    obs = log.ordered()
    bad = {2, 5}
    mixed = RendezvousLog(a0=log.a0, b0=log.b0)
    for o in obs:
        t = o.t_ref.compose(Pose3.from_euler(math.radians(12), 0, 0)) if o.index in bad else o.t_ref
        mixed.add(RendezvousObservation(o.index, t, o.t_a, o.t_b, o.direction))
    kept, report = delete_erroneous_nodes(mixed)
    assert set(report.removed_indices) == bad
    assert sorted(report.retained + report.removed_indices) == [o.index for o in obs]


# -- information -------------------------------------------------------------------------


def test_information_values():
    np.testing.assert_array_equal(information_matrix(ODOM), np.diag([100.0] * 3))
    np.testing.assert_array_equal(information_matrix(MUTUAL, 0.0, 0.0), np.diag([50.0, 50.0, 25.0]))
    km = mutual_information_quantity(0.1, 0.05)
    assert abs(km - 50 * math.exp(-0.15)) <= 1e-12
    assert km == pytest.approx(43.035, abs=1e-3)


def test_information_monotone_and_tau_ratio():
    prev = math.inf
    for a in np.linspace(0, 0.5, 11):
        km = mutual_information_quantity(a, -a / 2)
        assert km < prev
        prev = km
        m = information_matrix(MUTUAL, a, -a / 2, InfoParams(tau=0.3))
        assert m[2, 2] == pytest.approx(0.3 * m[0, 0], rel=1e-15)


def test_information_unknown_kind():
    with pytest.raises(ValueError):
        information_matrix("loop")


# -- construction ---------------------------------------------------------------------------


@pytest.mark.parametrize("alpha,beta,nv,ne", [(1, 0, 4, 3), (2, 3, 12, 15), (0, 4, 10, 12)])
def test_cardinalities(alpha, beta, nv, ne):
    g = construct_pose_graph(random_log(alpha, beta, seed=alpha * 10 + beta)[0])
    assert len(g.vertices) == nv == 2 * (1 + alpha + beta)
    assert len(g.edges) == ne == 3 * (alpha + beta)
    assert len(g.mutual_edges) == alpha + beta
    assert g.is_connected()


def test_direction_swaps_endpoints():
    ga = construct_pose_graph(one_obs_log(direction=A_OBSERVED))
    gb = construct_pose_graph(one_obs_log(direction=B_OBSERVED))
    ea, eb = ga.mutual_edges[0], gb.mutual_edges[0]
    assert (ea.src, ea.dst) == (3, 2)
    assert (eb.src, eb.dst) == (2, 3)
    assert ea.z == eb.z


def test_empty_log():
    with pytest.raises(EmptyLog):
        construct_pose_graph(RendezvousLog())


def test_edge_validation():
    with pytest.raises(ValueError):
        Edge(ODOM, 0, 1, Pose2(), np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        PoseGraph([Vertex(0, "A", 0, Pose2())], [Edge(ODOM, 0, 5, Pose2(), np.eye(3))])


# -- residuals ----------------------------------------------------------------------------


def test_residual_simple_cases():
    a, b = Pose2(1, 2, 0.3), Pose2(2, 1, -0.4)
    e = Edge(ODOM, 0, 1, a.between(b), np.eye(3))
    np.testing.assert_allclose(edge_residual(e, a, b), 0.0, atol=1e-15)
    e0 = Edge(ODOM, 0, 1, Pose2(1, 0, 0), np.eye(3))
    np.testing.assert_allclose(edge_residual(e0, Pose2(), Pose2(1.1, 0, 0)), [0.1, 0, 0], atol=1e-15)


def test_residual_recovers_twist():
    rng = np.random.default_rng(4)
    for _ in range(100):
        a = Pose2(*rng.normal(size=3))
        b = Pose2(*rng.normal(size=3))
        delta = rng.normal(scale=0.3, size=3)
        e = Edge(MUTUAL, 0, 1, a.between(b), np.eye(3))
        np.testing.assert_allclose(edge_residual(e, a, b @ se2_exp(delta)), delta, atol=1e-9)


def test_jacobians_finite_differences():
    rng = np.random.default_rng(5)
    h = 1e-6
    for _ in range(20):
        a, b = Pose2(*rng.normal(size=3)), Pose2(*rng.normal(size=3))
        e = Edge(ODOM, 0, 1, Pose2(*rng.normal(size=3)), np.eye(3))
        r, ji, jj = edge_jacobians(e, a, b)
        for which, jac in ((0, ji), (1, jj)):
            num = np.zeros((3, 3))
            for k in range(3):
                d = np.zeros(3)
                d[k] = h
                ap = a @ se2_exp(d) if which == 0 else a
                bp = b @ se2_exp(d) if which == 1 else b
                am = a @ se2_exp(-d) if which == 0 else a
                bm = b @ se2_exp(-d) if which == 1 else b
                num[:, k] = (edge_residual(e, ap, bp) - edge_residual(e, am, bm)) / (2 * h)
            np.testing.assert_allclose(jac, num, atol=1e-7)


# -- optimization ------------------------------------------------------------------------------


def test_consistent_graph_at_truth_needs_no_steps():
    log, wa, wb = random_log(3, 3, seed=6)
    g = construct_pose_graph(log)
    truth = {0: Pose2(), 1: wa[0].between(wb[0])}
    for k in range(1, 7):
        truth[2 * k] = wa[0].between(wa[k])
        truth[2 * k + 1] = wa[0].between(wb[k])
    res = optimize(g.with_poses(truth))
    assert res.cost <= 1e-20
    assert res.iterations == 0 and res.converged


def test_consistent_graph_recovered_from_odometry_init():
    log, wa, wb = random_log(4, 3, seed=7)
    g = construct_pose_graph(log)
    # scramble the initial guess beyond odometry chaining
    rng = np.random.default_rng(0)
    init = {vid: p @ Pose2(*rng.normal(scale=0.3, size=3)) if vid else p for vid, p in g.poses().items()}
    res = optimize(g.with_poses(init))
    assert res.converged and res.cost <= 1e-18
    for k, p in enumerate(res.poses_a):
        assert max_pose_diff(p, wa[0].between(wa[k])) < 1e-6
    for k, p in enumerate(res.poses_b):
        assert max_pose_diff(p, wa[0].between(wb[k])) < 1e-6


@pytest.mark.parametrize("seed", range(4))
def test_four_vertex_graph_matches_derivative_free_oracle(seed):
    g = four_vertex_graph(seed)
    res = optimize(g)
    oracle, cost = derivative_free_solution(g)
    assert res.cost == pytest.approx(cost, abs=1e-9)
    lm = res.graph.poses()
    for vid, p in oracle.items():
        assert max_pose_diff(lm[vid], p) < 1e-3


def test_cost_history_non_increasing():
    g = four_vertex_graph(11)
    hist = optimize(g).cost_history
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert hist[0] == pytest.approx(graph_cost(g))


def test_gauge_invariance():
    g = four_vertex_graph(3)
    base = optimize(g)
    # rigidly move every vertex; measurements are relative so the optimum is the same up to the motion
    m = Pose2(2.0, -1.0, 0.8)
    moved = g.with_poses({vid: m @ p for vid, p in g.poses().items()})
    res = optimize(moved)
    assert res.cost == pytest.approx(base.cost, rel=1e-9)
    for vid, p in base.graph.poses().items():
        assert max_pose_diff(res.graph.poses()[vid], m @ p) < 1e-8


def test_disconnected_graph():
    v = [Vertex(i, "A", i, Pose2()) for i in range(3)]
    g = PoseGraph(v, [Edge(ODOM, 0, 1, Pose2(1, 0, 0), np.eye(3))])
    with pytest.raises(NotConnected):
        optimize(g)


def test_unknown_anchor():
    with pytest.raises(KeyError):
        optimize(four_vertex_graph(0), anchor=42)


def test_run_pose_graph_reports_gate():
    log, _, _ = random_log(3, 2, seed=8)
    outcome = run_pose_graph(log)
    assert outcome.report.removed == []
    assert outcome.result.converged
    assert outcome.result.cost <= 1e-18
