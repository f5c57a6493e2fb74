"""Iterative pose refinement with pluggable relative-transform predictors.

The trained render-and-compare network is replaced by oracle predictors
that see the ground truth; the loop, the left-multiplicative update and
the point-matching bookkeeping are the real thing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import EmptyModel, PredictorFailure
from .geometry import Pose2, Pose3, exp_hat, lift_se3, log_vee, project_se2
from .losses import point_matching_loss

PAPER_ITERATIONS = 4
TRAIN_SIGMA_XY = 0.15
TRAIN_SIGMA_YAW = math.radians(20.0)


@dataclass(frozen=True)
class RobotModel:
    """Points sampled on the robot surface, in the robot body frame (meters)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            raise EmptyModel("robot model needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("robot model points must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def radius(self) -> float:
        return float(np.max(np.linalg.norm(self.points, axis=1)))

    @classmethod
    def box(cls, size=(0.45, 0.38, 0.24), count: int = 500, seed: int = 0) -> RobotModel:
        """Uniform samples on the surface of an axis-aligned box resting on z=0."""
        rng = np.random.default_rng(seed)
        sx, sy, sz = size
        areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
        face = rng.choice(6, size=count, p=areas / areas.sum())
        u = rng.uniform(-0.5, 0.5, size=(count, 3)) * np.array(size)
        u[:, 2] += 0.5 * sz
        half = 0.5 * np.array(size)
        u[face == 0, 0] = half[0]
        u[face == 1, 0] = -half[0]
        u[face == 2, 1] = half[1]
        u[face == 3, 1] = -half[1]
        u[face == 4, 2] = sz
        u[face == 5, 2] = 0.0
        return cls(u)

    @classmethod
    def load(cls, path) -> RobotModel:
        from .formats import read_points

        return cls(read_points(path))


@dataclass(frozen=True)
class RefinementConfig:
    iterations: int = PAPER_ITERATIONS
    early_stop: bool = False
    early_stop_tol: float = 1e-6

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass
class RefinementContext:
    t_gt: Pose3
    model: RobotModel


class DeltaPredictor(Protocol):
    def __call__(self, t_cur: Pose3, context: RefinementContext, iteration: int) -> Pose3: ...


class ExactOracle:
    """Returns the full correction ``T_gt * T_cur^-1``."""

    def __call__(self, t_cur, context, iteration):
        return context.t_gt.compose(t_cur.inverse())


class IdentityPredictor:
    def __call__(self, t_cur, context, iteration):
        return Pose3.identity()


class DampedNoisyOracle:
    """Scaled tangent-space correction plus seeded Gaussian tangent noise.

    ``delta = exp(gamma * log(T_gt T_cur^-1) + xi)`` with ``xi`` drawn from
    N(0, diag(sigma_t^2 I3, sigma_r^2 I3)).
    """

    def __init__(self, gamma: float = 0.5, sigma_t: float = 0.0, sigma_r: float = 0.0, seed=0):
        if not 0.0 < gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
        if sigma_t < 0 or sigma_r < 0:
            raise ValueError("noise scales must be non-negative")
        self.gamma = gamma
        self.sigma_t = sigma_t
        self.sigma_r = sigma_r
        self.rng = np.random.default_rng(seed)

    def __call__(self, t_cur, context, iteration):
        err = log_vee(context.t_gt.compose(t_cur.inverse()))
        xi = np.zeros(6)
        if self.sigma_t or self.sigma_r:
            xi = self.rng.normal(size=6) * np.repeat([self.sigma_t, self.sigma_r], 3)
        return exp_hat(self.gamma * err + xi)


def damped_noisy_oracle(gamma: float, sigma_t: float = 0.0, sigma_r: float = 0.0, seed=0) -> DampedNoisyOracle:
    return DampedNoisyOracle(gamma, sigma_t, sigma_r, seed)


@dataclass
class RefinementTrace:
    poses: list[Pose3] = field(default_factory=list)
    deltas: list[Pose3] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    @property
    def final(self) -> Pose3:
        return self.poses[-1]


def refine(
    t_init: Pose3,
    predictor: DeltaPredictor,
    cfg: RefinementConfig = RefinementConfig(),
    context: RefinementContext | None = None,
) -> tuple[Pose3, RefinementTrace]:
    """Run ``T_{t+1} = dT_t * T_t`` starting from ``t_init``.

    The trace holds every visited pose (initial included), the applied
    corrections and, when a context is given, the point-matching loss of
    each visited pose against ``context.t_gt``.
    """
    trace = RefinementTrace()
    t_cur = t_init

    def record(t):
        trace.poses.append(t)
        if context is not None:
            trace.losses.append(point_matching_loss(t, context.t_gt, context.model))

    record(t_cur)
    for it in range(cfg.iterations):
        try:
            delta = predictor(t_cur, context, it)
        except Exception as exc:  # noqa: BLE001 - re-raised with the iteration index
            raise PredictorFailure(it, exc) from exc
        if not isinstance(delta, Pose3):
            raise PredictorFailure(it, TypeError(f"predictor returned {type(delta).__name__}"))
        t_cur = delta.compose(t_cur)
        trace.deltas.append(delta)
        record(t_cur)
        if cfg.early_stop and np.linalg.norm(log_vee(delta)) < cfg.early_stop_tol:
            break
    return t_cur, trace


def initial_pose_sampler(
    t_gt: Pose3,
    seed=0,
    sigma_xy: float = TRAIN_SIGMA_XY,
    sigma_yaw: float = TRAIN_SIGMA_YAW,
) -> Pose3:
    """Perturb a planar pose in x, y and yaw; roll and pitch stay zero."""
    rng = np.random.default_rng(seed)
    p = project_se2(t_gt)
    dx, dy, dyaw = rng.normal(size=3) * np.array([sigma_xy, sigma_xy, sigma_yaw])
    q = lift_se3(Pose2(p.x + dx, p.y + dy, p.yaw + dyaw))
    return Pose3(q.rotation, (q.translation[0], q.translation[1], t_gt.translation[2]), check=False)


def tangent_error(t_cur: Pose3, t_gt: Pose3) -> np.ndarray:
    """Twist of the remaining correction ``T_gt * T_cur^-1``."""
    return log_vee(t_gt.compose(t_cur.inverse()))
