"""Error metrics: absolute trajectory error, per-DoF statistics, map-fusion error."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass

import numpy as np

from .errors import LengthMismatch, MissingRendezvous
from .geometry import Pose2, Pose3, lift_se3, log_vee, map_origin_transform, project_se2, rotation_angle, wrap_angle


def _as_pose3(p) -> Pose3:
    return lift_se3(p) if isinstance(p, Pose2) else p


def _as_pose2(p) -> Pose2:
    return p if isinstance(p, Pose2) else project_se2(p)


def ate(gt, est) -> float:
    """RMS over poses of the SE(3) log of ``T_gt^-1 T_est``; meters and radians mixed unweighted."""
    gt, est = list(gt), list(est)
    if len(gt) != len(est):
        raise LengthMismatch(f"{len(gt)} ground-truth poses vs {len(est)} estimates")
    if not gt:
        raise LengthMismatch("ATE needs at least one pose")
    sq = [float(np.sum(log_vee(_as_pose3(g).inverse().compose(_as_pose3(e))) ** 2)) for g, e in zip(gt, est)]
    return math.sqrt(math.fsum(sq) / len(sq))


@dataclass(frozen=True)
class DofErrorStats:
    """Mean and population std of |dx|, |dy| (cm) and |dyaw| (deg)."""

    dx_mean_cm: float
    dx_std_cm: float
    dy_mean_cm: float
    dy_std_cm: float
    dyaw_mean_deg: float
    dyaw_std_deg: float
    count: int

    def cells(self) -> list[str]:
        return [
            f"{self.dx_mean_cm:.1f}±{self.dx_std_cm:.1f}",
            f"{self.dy_mean_cm:.1f}±{self.dy_std_cm:.1f}",
            f"{self.dyaw_mean_deg:.1f}±{self.dyaw_std_deg:.1f}",
        ]


def abs_errors(gt, est) -> np.ndarray:
    """Rows of (|dx| m, |dy| m, |dyaw| rad) with yaw wrapped into [0, pi]."""
    gt, est = list(gt), list(est)
    if len(gt) != len(est):
        raise LengthMismatch(f"{len(gt)} ground-truth poses vs {len(est)} estimates")
    rows = []
    for g, e in zip(gt, est):
        g, e = _as_pose2(g), _as_pose2(e)
        rows.append((abs(e.x - g.x), abs(e.y - g.y), abs(wrap_angle(e.yaw - g.yaw))))
    return np.array(rows, dtype=float).reshape(-1, 3)


def stats_from_abs_errors(err: np.ndarray) -> DofErrorStats:
    if len(err) == 0:
        raise LengthMismatch("statistics need at least one sample")
    mean = err.mean(axis=0)
    std = err.std(axis=0)
    return DofErrorStats(
        100.0 * mean[0], 100.0 * std[0], 100.0 * mean[1], 100.0 * std[1],
        math.degrees(mean[2]), math.degrees(std[2]), len(err),
    )  # fmt: skip


def dof_error_stats(gt, est) -> DofErrorStats:
    return stats_from_abs_errors(abs_errors(gt, est))


def frame_chain_error(t_a0_ai: Pose3, t_ai_bi: Pose3, t_bi_b0: Pose3, truth_a0_b0: Pose3) -> tuple[float, float]:
    """(rotation error deg, translation error cm) of the chained map-origin transform."""
    est = map_origin_transform(t_a0_ai, t_ai_bi, t_bi_b0)
    rot = math.degrees(rotation_angle(truth_a0_b0.rotation.T @ est.rotation))
    trans = 100.0 * float(np.linalg.norm(est.translation - truth_a0_b0.translation))
    return rot, trans


def map_fusion_error(trace, index: int, stage: str = "full") -> tuple[float, float]:
    """Map-origin error at rendezvous ``index`` using odometry and the ``stage`` mutual estimate."""
    if stage not in trace.estimates:
        raise MissingRendezvous(f"stage {stage!r} not in trace")
    if not 1 <= index <= len(trace.gt_rel):
        raise MissingRendezvous(f"no rendezvous {index} (have 1..{len(trace.gt_rel)})")
    k = index - 1
    rel = lift_se3(trace.estimates[stage][k])
    t_ai_bi = rel.inverse() if trace.directions[k] == "A_observed" else rel
    t_a0_ai = lift_se3(trace.odom_a[index])
    t_bi_b0 = lift_se3(trace.odom_b[index]).inverse()
    return frame_chain_error(t_a0_ai, t_ai_bi, t_bi_b0, lift_se3(trace.gt_a0_b0))


# -- tables ------------------------------------------------------------------

TABLE_COLUMNS = [
    "stage",
    "dx_mean_cm", "dx_std_cm", "dy_mean_cm", "dy_std_cm", "dyaw_mean_deg", "dyaw_std_deg",
    "ate", "count",
]  # fmt: skip


def table_csv(rows: dict[str, tuple[DofErrorStats, float]]) -> str:
    """CSV with one row per stage; mean and std in separate columns."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for stage, (st, a) in rows.items():
        vals = astuple(st)
        w.writerow([stage, *(f"{v:.6g}" for v in vals[:-1]), f"{a:.6g}", vals[-1]])
    return buf.getvalue()


def format_table(rows: dict[str, tuple[DofErrorStats, float]]) -> str:
    """Human-readable table: |dx| cm, |dy| cm, |dyaw| deg as mean±std, then ATE."""
    head = f"{'stage':<10} {'|dx| (cm)':>12} {'|dy| (cm)':>12} {'|dyaw| (deg)':>13} {'ATE':>8}"
    lines = [head]
    for stage, (st, a) in rows.items():
        c = st.cells()
        lines.append(f"{stage:<10} {c[0]:>12} {c[1]:>12} {c[2]:>13} {a:>8.3f}")
    return "\n".join(lines)

