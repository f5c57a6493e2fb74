"""Seeded rendezvous scenarios and the staged localization pipeline.

Robot A (observed) drives along the configured curve; robot B carries the
camera whose field-of-view cone every rendezvous must satisfy. The
``direction`` of each rendezvous decides whose pose is measured: for
``A_observed`` the measurement is A in B's frame, for ``B_observed`` it is
B in A's frame.

Every random draw comes from ``np.random.default_rng([seed, stream, index])``
so runs are reproducible and stages see identical noise (paired design).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .config import Circle, ImlNoise, ScenarioConfig, Sinusoid, Waypoints
from .errors import AllObservationsRejected, InfeasibleScenario, MutlocError, PipelineError
from .geometry import Pose2, Pose3, lift_se3, project_se2, rotation_from_euler
from .posegraph import (
    A_OBSERVED,
    B_OBSERVED,
    InfoParams,
    PgoOutcome,
    RendezvousLog,
    RendezvousObservation,
    run_pose_graph,
)
from .refinement import DampedNoisyOracle, RefinementConfig, RefinementContext, RobotModel, refine

STAGES = ("iml", "iml+ir", "iml+pgo", "full")
STAGE_ALIASES = {"iml+ir+pgo": "full", "all": "full"}
STAGE_LABELS = {"iml": "IML", "iml+ir": "IML+IR", "iml+pgo": "IML+PGO", "full": "IML+IR+PGO"}

_IML, _IR, _ODOM, _OUTLIER = 1, 2, 3, 4


def parse_stages(text: str) -> tuple[str, ...]:
    out = []
    for raw in text.split(","):
        s = raw.strip().lower()
        s = STAGE_ALIASES.get(s, s)
        if s not in STAGES:
            raise ValueError(f"unknown stage {raw.strip()!r} (choose from {', '.join(STAGES)})")
        if s not in out:
            out.append(s)
    if not out:
        raise ValueError("no stages selected")
    return tuple(out)


def _rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, stream, index])


# ---------------------------------------------------------------------------
# scenario geometry
# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    a_world: list[Pose2]  # A0 then one pose per rendezvous
    b_world: list[Pose2]
    directions: list[str]

    @property
    def count(self) -> int:
        return len(self.directions)

    def gt_relative(self, k: int) -> Pose2:
        """Ground-truth pose of the observed robot in the observer frame at rendezvous k (1-based)."""
        a, b = self.a_world[k], self.b_world[k]
        return b.between(a) if self.directions[k - 1] == A_OBSERVED else a.between(b)

    @property
    def gt_a0_b0(self) -> Pose2:
        return self.a_world[0].between(self.b_world[0])


def circle_poses(center_forward: float, radius: float, count: int) -> list[Pose2]:
    """``count + 1`` counter-clockwise poses: a start pose one step before the first rendezvous, then equal angles."""
    step = 2.0 * math.pi / count
    out = []
    for k in range(-1, count):
        phi = k * step
        out.append(Pose2(center_forward + radius * math.cos(phi), radius * math.sin(phi), phi + math.pi / 2))
    return out


def sinusoid_poses(amplitude: float, wavelength: float, span: float, start: float, count: int) -> list[Pose2]:
    """Poses along ``y = amplitude * sin(2 pi (x - start) / wavelength)`` with tangent headings."""
    step = span / (count - 1) if count > 1 else span
    out = []
    for k in range(-1, count):
        u = k * step
        phase = 2.0 * math.pi * u / wavelength
        slope = amplitude * 2.0 * math.pi / wavelength * math.cos(phase)
        out.append(Pose2(start + u, amplitude * math.sin(phase), math.atan2(slope, 1.0)))
    return out


def in_fov(rel: Pose2, fov) -> bool:
    rng = math.hypot(rel.x, rel.y)
    bearing = math.atan2(rel.y, rel.x)
    return fov.min_range <= rng <= fov.max_range and abs(bearing) <= math.radians(fov.half_angle_deg)


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    n = cfg.rendezvous_count
    t = cfg.trajectory
    if isinstance(t, Circle):
        a = circle_poses(t.center_forward, t.radius, n)
    elif isinstance(t, Sinusoid):
        a = sinusoid_poses(t.amplitude, t.wavelength, t.span, t.start, n)
    elif isinstance(t, Waypoints):
        a = [Pose2(*p) for p in t.poses]
        if len(a) == n:
            a = [a[0]] + a
    else:  # pragma: no cover - validated in config
        raise InfeasibleScenario(f"unknown trajectory {t!r}")
    b = [Pose2(*p) for p in cfg.observer]
    if len(b) == 1:
        b = b * (n + 1)
    for k in range(1, n + 1):
        rel = b[k].between(a[k])
        if not in_fov(rel, cfg.fov):
            raise InfeasibleScenario(
                f"rendezvous {k}: observed robot at range {math.hypot(rel.x, rel.y):.2f} m, "
                f"bearing {math.degrees(math.atan2(rel.y, rel.x)):.1f} deg is outside the camera cone"
            )
    if cfg.direction == "alternate":
        dirs = [A_OBSERVED if k % 2 else B_OBSERVED for k in range(1, n + 1)]
    elif cfg.direction == "a_observed":
        dirs = [A_OBSERVED] * n
    else:
        dirs = [B_OBSERVED] * n
    return Scenario(a, b, dirs)


# ---------------------------------------------------------------------------
# sensor surrogates
# ---------------------------------------------------------------------------


def simulate_iml(gt_pose: Pose2, noise: ImlNoise, seed: int = 0, index: int = 0) -> tuple[int, Pose2]:
    """Coarse detector surrogate: presence 1 and a Gaussian-perturbed pose."""
    d = _rng(seed, _IML, index).normal(size=3)
    sig = np.array([noise.sigma_x, noise.sigma_y, math.radians(noise.sigma_yaw_deg)])
    dx, dy, dyaw = d * sig
    return 1, Pose2(gt_pose.x + dx, gt_pose.y + dy, gt_pose.yaw + dyaw)


def simulate_odometry(world: list[Pose2], sigma_t: float, sigma_yaw: float, rng: np.random.Generator) -> list[Pose2]:
    """Dead-reckoned poses in the robot's own start frame; noise only on increments with motion."""
    odom = [Pose2.identity()]
    for k in range(1, len(world)):
        inc = world[k - 1].between(world[k])
        noise = rng.normal(size=3) * np.array([sigma_t, sigma_t, sigma_yaw])
        if inc.x or inc.y or inc.yaw:
            inc = inc.compose(Pose2(*noise))
        odom.append(odom[-1].compose(inc))
    return odom


def tilt(seed: int, index: int, rate: float, magnitude_deg: float, axis: str = "either") -> Pose3 | None:
    """Outlier injection: a roll or pitch rotation of the given magnitude, or None."""
    rng = _rng(seed, _OUTLIER, index)
    u, pick, sign = rng.uniform(), rng.integers(2), rng.choice((-1.0, 1.0))
    if u >= rate:
        return None
    use_roll = axis == "roll" or (axis == "either" and pick == 0)
    ang = sign * math.radians(magnitude_deg)
    r = rotation_from_euler(ang, 0.0, 0.0) if use_roll else rotation_from_euler(0.0, ang, 0.0)
    return Pose3(r, check=False)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass
class SimulationTrace:
    config: ScenarioConfig
    scenario: Scenario
    odom_a: list[Pose2]
    odom_b: list[Pose2]
    gt_rel: list[Pose2]
    o_hat: list[int]
    p_init: list[Pose2]
    t_ref: list[Pose3 | None]
    outliers: list[bool]
    estimates: dict[str, list[Pose2]] = field(default_factory=dict)
    gated: dict[str, list[bool]] = field(default_factory=dict)
    pgo: dict[str, PgoOutcome] = field(default_factory=dict)

    @property
    def directions(self) -> list[str]:
        return self.scenario.directions

    @property
    def gt_a0_b0(self) -> Pose2:
        return self.scenario.gt_a0_b0

    @property
    def stages(self) -> list[str]:
        return list(self.estimates)

    def ate(self, stage: str) -> float:
        return metrics.ate(self.gt_rel, self.estimates[stage])

    def dof_stats(self, stage: str) -> metrics.DofErrorStats:
        return metrics.dof_error_stats(self.gt_rel, self.estimates[stage])

    def injected_indices(self) -> list[int]:
        return [k for k, o in enumerate(self.outliers, start=1) if o]


def _observation_log(trace: SimulationTrace, measured: list[Pose3], upto: int) -> RendezvousLog:
    log = RendezvousLog()
    for k in range(1, upto + 1):
        log.add(
            RendezvousObservation(
                k, measured[k - 1], lift_se3(trace.odom_a[k]), lift_se3(trace.odom_b[k]), trace.directions[k - 1]
            )
        )
    return log


def pose_graph_estimates(outcome: PgoOutcome, odom_a: list[Pose2], odom_b: list[Pose2], directions: list[str], upto: int) -> list[Pose2]:
    """Relative estimates for rendezvous 1..upto from an optimized graph.

    Rendezvous dropped by the gate have no vertices; their robot poses are
    chained from the previous estimate with relative odometry.
    """
    by_key = {(v.robot, v.idx): v.pose for v in outcome.result.graph.vertices}
    est_a = [by_key[("A", 0)]]
    est_b = [by_key[("B", 0)]]
    for k in range(1, upto + 1):
        est_a.append(by_key.get(("A", k)) or est_a[-1].compose(odom_a[k - 1].between(odom_a[k])))
        est_b.append(by_key.get(("B", k)) or est_b[-1].compose(odom_b[k - 1].between(odom_b[k])))
    out = []
    for k in range(1, upto + 1):
        if directions[k - 1] == A_OBSERVED:
            out.append(est_b[k].between(est_a[k]))
        else:
            out.append(est_a[k].between(est_b[k]))
    return out


def _run_pgo(trace: SimulationTrace, stage: str, measured: list[Pose3], params: InfoParams) -> None:
    n = len(measured)
    mode = trace.config.pgo.mode
    if mode == "batch":
        try:
            outcome = run_pose_graph(_observation_log(trace, measured, n), params)
        except MutlocError as exc:
            raise PipelineError(f"stage {stage}", exc) from exc
        trace.estimates[stage] = pose_graph_estimates(outcome, trace.odom_a, trace.odom_b, trace.directions, n)
        trace.pgo[stage] = outcome
        removed = set(outcome.report.removed_indices)
        trace.gated[stage] = [k in removed for k in range(1, n + 1)]
        return
    # incremental: re-optimize after every rendezvous, keep the newest estimate
    est, gated = [], []
    outcome = None
    for k in range(1, n + 1):
        try:
            outcome = run_pose_graph(_observation_log(trace, measured, k), params)
        except AllObservationsRejected:
            est.append(project_se2(measured[k - 1]))
            gated.append(True)
            continue
        except MutlocError as exc:
            raise PipelineError(f"stage {stage}, rendezvous {k}", exc) from exc
        est.append(pose_graph_estimates(outcome, trace.odom_a, trace.odom_b, trace.directions, k)[-1])
        gated.append(k in outcome.report.removed_indices)
    trace.estimates[stage] = est
    trace.gated[stage] = gated
    if outcome is not None:
        trace.pgo[stage] = outcome


def run_pipeline(cfg: ScenarioConfig, stages=STAGES, model: RobotModel | None = None) -> SimulationTrace:
    """Simulate every rendezvous and evaluate the selected stages."""
    stages = tuple(stages)
    for s in stages:
        if s not in STAGES:
            raise ValueError(f"unknown stage {s!r}")
    scen = generate_scenario(cfg)
    n = scen.count
    seed = cfg.seed
    if model is None:
        model = RobotModel.box(count=cfg.model_points, seed=seed)
    odom_a = simulate_odometry(
        scen.a_world, cfg.odom_noise.sigma_t, math.radians(cfg.odom_noise.sigma_yaw_deg), _rng(seed, _ODOM, 0)
    )
    odom_b = simulate_odometry(
        scen.b_world, cfg.odom_noise.sigma_t, math.radians(cfg.odom_noise.sigma_yaw_deg), _rng(seed, _ODOM, 1)
    )
    gt_rel = [scen.gt_relative(k) for k in range(1, n + 1)]
    trace = SimulationTrace(cfg, scen, odom_a, odom_b, gt_rel, [], [], [], [])

    need_ir = any(s in ("iml+ir", "full") for s in stages)
    refine_cfg = RefinementConfig(iterations=cfg.ir.iterations)
    meas_iml: list[Pose3] = []
    meas_ir: list[Pose3] = []
    for k in range(1, n + 1):
        gt = gt_rel[k - 1]
        o_hat, p_init = simulate_iml(gt, cfg.iml_noise, seed, k)
        trace.o_hat.append(o_hat)
        trace.p_init.append(p_init)
        bad = tilt(seed, k, cfg.outlier.rate, cfg.outlier.magnitude_deg, cfg.outlier.axis)
        trace.outliers.append(bad is not None)
        t_init = lift_se3(p_init)
        meas_iml.append(t_init if bad is None else t_init.compose(bad))
        if need_ir:
            oracle = DampedNoisyOracle(cfg.ir.gamma, cfg.ir.sigma_t, math.radians(cfg.ir.sigma_r_deg), _rng(seed, _IR, k))
            try:
                t_ref, _ = refine(t_init, oracle, refine_cfg, RefinementContext(lift_se3(gt), model))
            except MutlocError as exc:
                raise PipelineError(f"rendezvous {k}", exc) from exc
            t_ref = t_ref if bad is None else t_ref.compose(bad)
            trace.t_ref.append(t_ref)
            meas_ir.append(t_ref)
        else:
            trace.t_ref.append(None)

    params = InfoParams(cfg.pgo.kappa, cfg.pgo.tau, cfg.pgo.sigma_deg)
    for s in stages:
        if s == "iml":
            trace.estimates[s] = list(trace.p_init)
            trace.gated[s] = [False] * n
        elif s == "iml+ir":
            trace.estimates[s] = [project_se2(t) for t in meas_ir]
            trace.gated[s] = [False] * n
        elif s == "iml+pgo":
            _run_pgo(trace, s, meas_iml, params)
        else:
            _run_pgo(trace, s, meas_ir, params)
    return trace


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ["index", "stage", "x_err", "y_err", "yaw_err_deg", "gated"]


def trace_rows(trace: SimulationTrace):
    for stage in trace.stages:
        for k, (g, e) in enumerate(zip(trace.gt_rel, trace.estimates[stage]), start=1):
            dyaw = math.degrees(math.remainder(e.yaw - g.yaw, 2.0 * math.pi))
            yield k, stage, e.x - g.x, e.y - g.y, dyaw, int(trace.gated[stage][k - 1])


def trace_csv(trace: SimulationTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for k, stage, dx, dy, dyaw, gated in trace_rows(trace):
        w.writerow([k, stage, f"{dx:.17g}", f"{dy:.17g}", f"{dyaw:.17g}", gated])
    return buf.getvalue()
