"""Two-robot pose graph: outlier gating, construction, edge weighting and LM optimization.

Vertices live in SE(2). Robot A's initial pose A0 is the gauge anchor, so
all estimates are expressed in A's odometry origin frame.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import AllObservationsRejected, EmptyLog, NotConnected, SingularNormalEquations
from .geometry import (
    Pose2,
    Pose3,
    euler_from_rotation,
    project_se2,
    se2_adjoint,
    se2_exp,
    se2_log,
    se2_right_jacobian,
)

A_OBSERVED = "A_observed"
B_OBSERVED = "B_observed"
ODOM = "odom"
MUTUAL = "mutual"


@dataclass(frozen=True)
class RendezvousObservation:
    """One rendezvous: measured pose of the observed robot in the observer frame plus both odometries."""

    index: int
    t_ref: Pose3
    t_a: Pose3
    t_b: Pose3
    direction: str = A_OBSERVED

    def __post_init__(self):
        if self.direction not in (A_OBSERVED, B_OBSERVED):
            raise ValueError(f"unknown direction {self.direction!r}")


@dataclass
class RendezvousLog:
    observations_a: list[RendezvousObservation] = field(default_factory=list)
    observations_b: list[RendezvousObservation] = field(default_factory=list)
    a0: Pose3 = field(default_factory=Pose3.identity)
    b0: Pose3 = field(default_factory=Pose3.identity)

    def add(self, obs: RendezvousObservation) -> None:
        last = self.ordered()
        if last and obs.index <= last[-1].index:
            raise ValueError(f"rendezvous index {obs.index} not after {last[-1].index}")
        (self.observations_a if obs.direction == A_OBSERVED else self.observations_b).append(obs)

    def ordered(self) -> list[RendezvousObservation]:
        return sorted(self.observations_a + self.observations_b, key=lambda o: o.index)

    def __len__(self) -> int:
        return len(self.observations_a) + len(self.observations_b)


@dataclass(frozen=True)
class InfoParams:
    kappa: float = 100.0
    tau: float = 0.5
    sigma_deg: float = 10.0

    def __post_init__(self):
        if self.kappa <= 0 or self.tau <= 0 or self.sigma_deg <= 0:
            raise ValueError("kappa, tau and sigma must be positive")

    @property
    def sigma(self) -> float:
        return math.radians(self.sigma_deg)


@dataclass
class GateReport:
    retained: list[int] = field(default_factory=list)
    # (index, roll_deg, pitch_deg) of every removed observation
    removed: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def removed_indices(self) -> list[int]:
        return [r[0] for r in self.removed]


def delete_erroneous_nodes(log: RendezvousLog, params: InfoParams = InfoParams()) -> tuple[RendezvousLog, GateReport]:
    """Drop observations whose measured roll or pitch exceeds the gate (strictly)."""
    report = GateReport()
    kept = RendezvousLog(a0=log.a0, b0=log.b0)
    for obs in log.ordered():
        e = euler_from_rotation(obs.t_ref.rotation)
        if abs(e.roll) > params.sigma or abs(e.pitch) > params.sigma:
            report.removed.append((obs.index, math.degrees(e.roll), math.degrees(e.pitch)))
        else:
            report.retained.append(obs.index)
            kept.add(obs)
    if not len(kept):
        raise AllObservationsRejected(f"all {len(log)} observations exceed the roll/pitch gate", report)
    return kept, report


def mutual_information_quantity(roll: float, pitch: float, params: InfoParams = InfoParams()) -> float:
    return 0.5 * params.kappa * math.exp(-abs(roll) - abs(pitch))


def information_matrix(kind: str, roll: float = 0.0, pitch: float = 0.0, params: InfoParams = InfoParams()) -> np.ndarray:
    """Diagonal edge information; roll and pitch (radians) only matter for mutual edges."""
    if kind == ODOM:
        return np.diag([params.kappa] * 3)
    if kind == MUTUAL:
        km = mutual_information_quantity(roll, pitch, params)
        return np.diag([km, km, params.tau * km])
    raise ValueError(f"unknown edge kind {kind!r}")


@dataclass(frozen=True)
class Vertex:
    id: int
    robot: str
    idx: int
    pose: Pose2


@dataclass(frozen=True)
class Edge:
    kind: str
    src: int
    dst: int
    z: Pose2
    info: np.ndarray

    def __post_init__(self):
        info = np.array(self.info, dtype=np.float64)
        if info.shape != (3, 3) or not np.allclose(info, info.T, rtol=0, atol=0):
            raise ValueError("edge information must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(info) <= 0):
            raise ValueError("edge information must be positive definite")
        info.flags.writeable = False
        object.__setattr__(self, "info", info)


@dataclass
class PoseGraph:
    vertices: list[Vertex]
    edges: list[Edge]

    def __post_init__(self):
        ids = [v.id for v in self.vertices]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate vertex ids")
        known = set(ids)
        for e in self.edges:
            if e.src not in known or e.dst not in known:
                raise ValueError(f"edge {e.src}->{e.dst} references a missing vertex")

    @property
    def odometry_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.kind == ODOM]

    @property
    def mutual_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.kind == MUTUAL]

    def vertex(self, vid: int) -> Vertex:
        for v in self.vertices:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def poses(self) -> dict[int, Pose2]:
        return {v.id: v.pose for v in self.vertices}

    def with_poses(self, poses: dict[int, Pose2]) -> PoseGraph:
        return PoseGraph([replace(v, pose=poses.get(v.id, v.pose)) for v in self.vertices], list(self.edges))

    def default_anchor(self) -> int:
        for v in self.vertices:
            if v.robot == "A" and v.idx == 0:
                return v.id
        return self.vertices[0].id

    def is_connected(self) -> bool:
        if not self.vertices:
            return True
        adj: dict[int, list[int]] = {v.id: [] for v in self.vertices}
        for e in self.edges:
            adj[e.src].append(e.dst)
            adj[e.dst].append(e.src)
        start = self.vertices[0].id
        seen = {start}
        queue = deque([start])
        while queue:
            for nb in adj[queue.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        return len(seen) == len(self.vertices)


def _relative_odometry(prev: Pose3, cur: Pose3) -> Pose2:
    return project_se2(prev.inverse().compose(cur))


def construct_pose_graph(log: RendezvousLog, params: InfoParams = InfoParams()) -> PoseGraph:
    """Build vertices A0, B0, (A_k, B_k) and 3 edges per retained rendezvous.

    Vertex ids: A0=0, B0=1, A_k=2k, B_k=2k+1 for the k-th rendezvous in time
    order. Initial estimates chain odometry from A0 and reach B's chain
    through the first mutual measurement.
    """
    obs = log.ordered()
    if not obs:
        raise EmptyLog("cannot build a pose graph from an empty rendezvous log")
    edges: list[Edge] = []
    odo_info = information_matrix(ODOM, params=params)
    prev_a, prev_b = log.a0, log.b0
    for k, o in enumerate(obs, start=1):
        a_id, b_id = 2 * k, 2 * k + 1
        edges.append(Edge(ODOM, a_id - 2, a_id, _relative_odometry(prev_a, o.t_a), odo_info))
        edges.append(Edge(ODOM, b_id - 2, b_id, _relative_odometry(prev_b, o.t_b), odo_info))
        e = euler_from_rotation(o.t_ref.rotation)
        info = information_matrix(MUTUAL, e.roll, e.pitch, params)
        z = project_se2(o.t_ref)
        if o.direction == A_OBSERVED:
            edges.append(Edge(MUTUAL, b_id, a_id, z, info))
        else:
            edges.append(Edge(MUTUAL, a_id, b_id, z, info))
        prev_a, prev_b = o.t_a, o.t_b

    # initial estimates by odometry chaining
    a_poses = [Pose2.identity()] + [_relative_odometry(log.a0, o.t_a) for o in obs]
    b_odo = [Pose2.identity()] + [_relative_odometry(log.b0, o.t_b) for o in obs]
    first = obs[0]
    z1 = project_se2(first.t_ref)
    b1 = a_poses[1].compose(z1.inverse()) if first.direction == A_OBSERVED else a_poses[1].compose(z1)
    b0 = b1.compose(b_odo[1].inverse())
    b_poses = [b0.compose(p) for p in b_odo]

    vertices = [Vertex(0, "A", 0, a_poses[0]), Vertex(1, "B", 0, b_poses[0])]
    for k, o in enumerate(obs, start=1):
        vertices.append(Vertex(2 * k, "A", o.index, a_poses[k]))
        vertices.append(Vertex(2 * k + 1, "B", o.index, b_poses[k]))
    return PoseGraph(vertices, edges)


def edge_residual(edge: Edge, x_from: Pose2, x_to: Pose2) -> np.ndarray:
    """``log(Z^-1 * x_from^-1 * x_to)``; zero when the measurement explains the pair."""
    return se2_log(edge.z.inverse().compose(x_from.inverse().compose(x_to)))


def edge_jacobians(edge: Edge, x_from: Pose2, x_to: Pose2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residual and its Jacobians under right perturbations ``x <- x * exp(d)``."""
    r = edge_residual(edge, x_from, x_to)
    jr_inv = np.linalg.inv(se2_right_jacobian(r))
    rel_inv = x_to.inverse().compose(x_from)
    return r, -jr_inv @ se2_adjoint(rel_inv), jr_inv


def graph_cost(graph: PoseGraph, poses: dict[int, Pose2] | None = None) -> float:
    """Half the sum of information-weighted squared residuals."""
    poses = graph.poses() if poses is None else poses
    total = 0.0
    for e in graph.edges:
        r = edge_residual(e, poses[e.src], poses[e.dst])
        total += float(r @ e.info @ r)
    return 0.5 * total


@dataclass
class OptimizationResult:
    graph: PoseGraph
    cost: float
    iterations: int
    converged: bool
    cost_history: list[float]
    damping: float
    anchor: int

    def robot_poses(self, robot: str) -> list[Pose2]:
        vs = sorted((v for v in self.graph.vertices if v.robot == robot), key=lambda v: v.id)
        return [v.pose for v in vs]

    @property
    def poses_a(self) -> list[Pose2]:
        return self.robot_poses("A")

    @property
    def poses_b(self) -> list[Pose2]:
        return self.robot_poses("B")


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 100
    initial_damping: float = 1e-4
    damping_up: float = 10.0
    damping_down: float = 0.5
    max_damping: float = 1e12
    rel_tol: float = 1e-10
    step_tol: float = 1e-10


def optimize(graph: PoseGraph, anchor: int | None = None, options: SolverOptions = SolverOptions()) -> OptimizationResult:
    """Levenberg-Marquardt over all vertices except the anchor.

    Only cost-decreasing steps are accepted, so ``cost_history`` is
    non-increasing. Running out of iterations returns ``converged=False``.
    """
    if anchor is None:
        anchor = graph.default_anchor()
    graph.vertex(anchor)
    if not graph.is_connected():
        raise NotConnected("pose graph has more than one connected component")
    free = [v.id for v in graph.vertices if v.id != anchor]
    col = {vid: 3 * i for i, vid in enumerate(free)}
    n = 3 * len(free)
    poses = graph.poses()
    cost = graph_cost(graph, poses)
    history = [cost]
    lam = options.initial_damping
    iterations = 0
    converged = False
    if n == 0:
        return OptimizationResult(graph, cost, 0, True, history, lam, anchor)

    for _ in range(options.max_iterations):
        h = np.zeros((n, n))
        g = np.zeros(n)
        for e in graph.edges:
            r, ji, jj = edge_jacobians(e, poses[e.src], poses[e.dst])
            blocks = [(col.get(e.src), ji), (col.get(e.dst), jj)]
            for ca, ja in blocks:
                if ca is None:
                    continue
                g[ca : ca + 3] += ja.T @ e.info @ r
                for cb, jb in blocks:
                    if cb is not None:
                        h[ca : ca + 3, cb : cb + 3] += ja.T @ e.info @ jb
        while True:
            try:
                factor = cho_factor(h + lam * np.eye(n))
                break
            except np.linalg.LinAlgError:
                lam *= options.damping_up
                if lam > options.max_damping:
                    raise SingularNormalEquations("normal equations not positive definite", lam) from None
        step = -cho_solve(factor, g)
        if np.linalg.norm(step) < options.step_tol:
            converged = True
            break
        trial = dict(poses)
        for vid in free:
            c = col[vid]
            trial[vid] = poses[vid].compose(se2_exp(step[c : c + 3]))
        new_cost = graph_cost(graph, trial)
        if new_cost < cost:
            decrease = (cost - new_cost) / cost if cost > 0 else 0.0
            poses, cost = trial, new_cost
            history.append(cost)
            iterations += 1
            lam = max(lam * options.damping_down, 1e-15)
            if decrease < options.rel_tol or cost == 0.0:
                converged = True
                break
        else:
            lam *= options.damping_up
            if lam > options.max_damping:
                # no descent left at any damping: stationary to working precision
                converged = True
                break
    return OptimizationResult(graph.with_poses(poses), cost, iterations, converged, history, lam, anchor)


@dataclass
class PgoOutcome:
    filtered: RendezvousLog
    report: GateReport
    graph: PoseGraph
    result: OptimizationResult


def run_pose_graph(log: RendezvousLog, params: InfoParams = InfoParams(), options: SolverOptions = SolverOptions()) -> PgoOutcome:
    """Gate, construct, weight and optimize in one call."""
    filtered, report = delete_erroneous_nodes(log, params)
    graph = construct_pose_graph(filtered, params)
    result = optimize(graph, options=options)
    return PgoOutcome(filtered, report, graph, result)
