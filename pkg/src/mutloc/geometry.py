"""SE(2) / SE(3) value types and Lie-group maps.

Twists are plain numpy vectors ordered translation-first: ``(rho, theta)``,
length 3 for SE(2) and 6 for SE(3). Euler angles follow the ZYX
(yaw-pitch-roll) convention, ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import GimbalLockWarning, InvalidPose, NearSingularRotation

ORTHO_TOL = 1e-9
SINGULAR_TOL = 1e-6
GIMBAL_MARGIN = 1e-3
_SMALL = 1e-6


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(float(a), 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


# ---------------------------------------------------------------------------
# SE(2)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @classmethod
    def identity(cls) -> Pose2:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, v) -> Pose2:
        return cls(v[0], v[1], v[2])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw])

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, -s], [s, c]])

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])

    def compose(self, other: Pose2) -> Pose2:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.yaw + other.yaw,
        )

    __matmul__ = compose

    def inverse(self) -> Pose2:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2(-c * self.x - s * self.y, s * self.x - c * self.y, -self.yaw)

    def between(self, other: Pose2) -> Pose2:
        """Relative pose ``self^-1 * other``."""
        return self.inverse().compose(other)

    def transform_point(self, p) -> np.ndarray:
        return self.rotation() @ np.asarray(p, dtype=float) + np.array([self.x, self.y])


def _se2_v_coeffs(theta: float) -> tuple[float, float]:
    # V = a*I + b*J with J the 2D skew generator
    if abs(theta) < _SMALL:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0
    return math.sin(theta) / theta, (1.0 - math.cos(theta)) / theta


def se2_exp(v) -> Pose2:
    rho1, rho2, theta = (float(c) for c in v)
    a, b = _se2_v_coeffs(theta)
    return Pose2(a * rho1 - b * rho2, b * rho1 + a * rho2, theta)


def se2_log(p: Pose2) -> np.ndarray:
    theta = p.yaw
    a, b = _se2_v_coeffs(theta)
    det = a * a + b * b
    # V^-1 = (a*I - b*J) / det
    rho1 = (a * p.x + b * p.y) / det
    rho2 = (-b * p.x + a * p.y) / det
    return np.array([rho1, rho2, theta])


def se2_right_jacobian(v) -> np.ndarray:
    """Right Jacobian Jr with exp(v + d) ~= exp(v) exp(Jr d)."""
    rho1, rho2, theta = (float(c) for c in v)
    if abs(theta) < _SMALL:
        return np.array(
            [
                [1.0, theta / 2.0, -rho2 / 2.0],
                [-theta / 2.0, 1.0, rho1 / 2.0],
                [0.0, 0.0, 1.0],
            ]
        )
    s, c = math.sin(theta), math.cos(theta)
    t2 = theta * theta
    return np.array(
        [
            [s / theta, (1.0 - c) / theta, (theta * rho1 - rho2 + rho2 * c - rho1 * s) / t2],
            [(c - 1.0) / theta, s / theta, (rho1 + theta * rho2 - rho1 * c - rho2 * s) / t2],
            [0.0, 0.0, 1.0],
        ]
    )


def se2_adjoint(p: Pose2) -> np.ndarray:
    c, s = math.cos(p.yaw), math.sin(p.yaw)
    return np.array([[c, -s, p.y], [s, c, -p.x], [0.0, 0.0, 1.0]])


# ---------------------------------------------------------------------------
# SO(3) / SE(3)
# ---------------------------------------------------------------------------


def hat3(w) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee3(m: np.ndarray) -> np.ndarray:
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def rotation_angle(r: np.ndarray) -> float:
    s = np.linalg.norm(vee3(r))
    c = 0.5 * (np.trace(r) - 1.0)
    return math.atan2(s, c)


def _exp_coeffs(theta: float) -> tuple[float, float, float]:
    # A = sin t / t, B = (1 - cos t) / t^2, C = (t - sin t) / t^3
    if theta < 1e-4:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    s, c = math.sin(theta), math.cos(theta)
    return s / theta, (1.0 - c) / theta**2, (theta - s) / theta**3


def so3_exp(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    a, b, _ = _exp_coeffs(theta)
    k = hat3(w)
    return np.eye(3) + a * k + b * (k @ k)


def so3_log(r: np.ndarray) -> np.ndarray:
    theta = rotation_angle(r)
    if math.pi - theta < SINGULAR_TOL:
        raise NearSingularRotation(f"rotation angle {theta!r} within {SINGULAR_TOL} of pi")
    axis_sin = vee3(r)
    if theta < 1e-4:
        return axis_sin * (1.0 + theta * theta / 6.0)
    return axis_sin * (theta / math.sin(theta))


def rotation_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


class EulerAngles(NamedTuple):
    roll: float
    pitch: float
    yaw: float


def euler_from_rotation(r: np.ndarray) -> EulerAngles:
    """ZYX Euler angles of ``r``; warns with GimbalLockWarning near |pitch| = pi/2."""
    r = np.asarray(r, dtype=float)
    pitch = math.atan2(-r[2, 0], math.hypot(r[0, 0], r[1, 0]))
    if abs(pitch) >= math.pi / 2 - GIMBAL_MARGIN:
        warnings.warn(f"pitch {pitch:.6f} rad is at gimbal lock", GimbalLockWarning, stacklevel=2)
        # roll and yaw are coupled here; put everything into yaw
        roll = 0.0
        yaw = math.atan2(-r[0, 1], r[1, 1])
    else:
        roll = math.atan2(r[2, 1], r[2, 2])
        yaw = math.atan2(r[1, 0], r[0, 0])
    return EulerAngles(roll, pitch, wrap_angle(yaw))


class Pose3:
    """Rigid transform in SE(3); immutable."""

    __slots__ = ("_r", "_t")

    def __init__(self, rotation=None, translation=None, *, check: bool = True):
        r = np.eye(3) if rotation is None else np.array(rotation, dtype=float)
        t = np.zeros(3) if translation is None else np.array(translation, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvalidPose(f"expected 3x3 rotation and 3-vector, got {r.shape} and {t.shape}")
        if check:
            if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
                raise InvalidPose("non-finite pose entries")
            if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
                raise InvalidPose("rotation is not orthonormal with det +1")
        r.flags.writeable = False
        t.flags.writeable = False
        self._r = r
        self._t = t

    @property
    def rotation(self) -> np.ndarray:
        return self._r

    @property
    def translation(self) -> np.ndarray:
        return self._t

    @classmethod
    def identity(cls) -> Pose3:
        return cls(check=False)

    @classmethod
    def from_matrix(cls, m) -> Pose3:
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_euler(cls, roll=0.0, pitch=0.0, yaw=0.0, translation=None) -> Pose3:
        return cls(rotation_from_euler(roll, pitch, yaw), translation, check=False)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self._r
        m[:3, 3] = self._t
        return m

    def compose(self, other: Pose3) -> Pose3:
        return Pose3(self._r @ other._r, self._r @ other._t + self._t, check=False)

    __matmul__ = compose

    def inverse(self) -> Pose3:
        rt = self._r.T
        return Pose3(rt, -rt @ self._t, check=False)

    def transform_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self._r.T + self._t

    def euler(self) -> EulerAngles:
        return euler_from_rotation(self._r)

    def allclose(self, other: Pose3, atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self._r, other._r, rtol=0.0, atol=atol)
            and np.allclose(self._t, other._t, rtol=0.0, atol=atol)
        )

    def __repr__(self) -> str:
        e = euler_from_rotation(self._r)
        t = self._t
        return (
            f"Pose3(t=({t[0]:.6g}, {t[1]:.6g}, {t[2]:.6g}), "
            f"rpy=({e.roll:.6g}, {e.pitch:.6g}, {e.yaw:.6g}))"
        )


def compose(a: Pose3, b: Pose3) -> Pose3:
    return a.compose(b)


def inverse(t: Pose3) -> Pose3:
    return t.inverse()


def exp_hat(v) -> Pose3:
    """SE(3) exponential of a twist ``(rho, theta)``."""
    v = np.asarray(v, dtype=float)
    rho, w = v[:3], v[3:]
    theta = float(np.linalg.norm(w))
    a, b, c = _exp_coeffs(theta)
    k = hat3(w)
    k2 = k @ k
    r = np.eye(3) + a * k + b * k2
    vmat = np.eye(3) + b * k + c * k2
    return Pose3(r, vmat @ rho, check=False)


def log_vee(t: Pose3) -> np.ndarray:
    """SE(3) logarithm as a twist ``(rho, theta)``; raises NearSingularRotation near pi."""
    w = so3_log(t.rotation)
    theta = float(np.linalg.norm(w))
    k = hat3(w)
    if theta < 1e-4:
        d = 1.0 / 12.0 + theta * theta / 720.0
    else:
        d = (1.0 - theta * math.sin(theta) / (2.0 * (1.0 - math.cos(theta)))) / theta**2
    vinv = np.eye(3) - 0.5 * k + d * (k @ k)
    return np.concatenate([vinv @ t.translation, w])


def project_se2(t: Pose3) -> Pose2:
    """Keep (x, y, yaw); z, roll and pitch are dropped."""
    r = t.rotation
    return Pose2(t.translation[0], t.translation[1], math.atan2(r[1, 0], r[0, 0]))


def lift_se3(p: Pose2) -> Pose3:
    return Pose3.from_euler(0.0, 0.0, p.yaw, (p.x, p.y, 0.0))


def map_origin_transform(t_a0_ai: Pose3, t_ai_bi: Pose3, t_bi_b0: Pose3) -> Pose3:
    """Pose of B's map origin in A's map origin from the chain A0->Ai->Bi->B0."""
    return t_a0_ai.compose(t_ai_bi).compose(t_bi_b0)


def random_rotation(rng: np.random.Generator, max_angle: float = math.pi - 1e-3) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return so3_exp(axis * rng.uniform(0.0, max_angle))


def random_pose3(rng: np.random.Generator, scale: float = 5.0, max_angle: float = 3.0) -> Pose3:
    return Pose3(random_rotation(rng, max_angle), rng.uniform(-scale, scale, size=3), check=False)
