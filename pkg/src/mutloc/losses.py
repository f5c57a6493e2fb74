"""Training losses of the detection/regression network and the refinement network."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatch, EmptyModel, LengthMismatch, ShapeMismatch
from .geometry import Pose2, Pose3

BCE_EPS = 1e-12
_LOGIT_CLIP = 500.0


@dataclass(frozen=True)
class LossWeights:
    yaw: float = 3.0  # weight of the yaw term inside the localization loss
    pose: float = 2.0  # weight of the localization loss in the total

    def __post_init__(self):
        if self.yaw <= 0 or self.pose <= 0:
            raise ValueError("loss weights must be positive")


@dataclass(frozen=True)
class PoseLabel:
    o: int
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if self.o not in (0, 1):
            raise ValueError(f"presence label must be 0 or 1, got {self.o}")
        if self.o == 0 and (self.x or self.y or self.yaw):
            raise ValueError("absent robots carry an all-zero pose")


def observation_loss(pred, truth) -> float:
    """Binary cross-entropy of presence probabilities, mean over the batch."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    o = np.asarray(truth, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise EmptyBatch("observation loss over an empty batch")
    if p.shape != o.shape:
        raise LengthMismatch(f"{p.size} predictions for {o.size} labels")
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.mean(o * np.log(p) + (1.0 - o) * np.log1p(-p)))


def _pose_rows(poses) -> np.ndarray:
    rows = []
    for p in poses:
        if isinstance(p, (Pose2, PoseLabel)):
            rows.append((p.x, p.y, p.yaw))
        else:
            rows.append(tuple(p)[-3:])
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def localization_loss(pred, truth, weights: LossWeights = LossWeights()) -> float:
    """Weighted MSE over (x, y, yaw); yaw differences are not wrapped."""
    a, b = _pose_rows(pred), _pose_rows(truth)
    if len(a) == 0:
        raise EmptyBatch("localization loss over an empty batch")
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} predictions for {len(b)} labels")
    d = a - b
    return float(np.mean(d[:, 0] ** 2 + d[:, 1] ** 2 + weights.yaw * d[:, 2] ** 2))


def total_loss(obs_loss: float, loc_loss: float, weights: LossWeights = LossWeights()) -> float:
    return obs_loss + weights.pose * loc_loss


def point_matching_loss(t_cur: Pose3, t_gt: Pose3, points) -> float:
    """Mean L1 distance between model points under the current and true poses."""
    pts = getattr(points, "points", points)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyModel("point matching loss needs at least one model point")
    diff = t_cur.transform_points(pts) - t_gt.transform_points(pts)
    return float(np.mean(np.sum(np.abs(diff), axis=1)))


def mask_loss(logits, truth) -> float:
    """Mean sigmoid cross-entropy over pixels."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeMismatch(f"mask logits {z.shape} vs truth {y.shape}")
    z = np.clip(z, -_LOGIT_CLIP, _LOGIT_CLIP)
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def epe_flow_loss(pred, truth) -> float:
    """Mean endpoint error; flow fields are ``(2, W, H)`` with channels (u, v)."""
    a = np.asarray(pred, dtype=np.float64)
    b = np.asarray(truth, dtype=np.float64)
    if a.shape != b.shape or a.ndim < 1 or a.shape[0] != 2:
        raise ShapeMismatch(f"flow fields must share a (2, ...) shape, got {a.shape} and {b.shape}")
    return float(np.mean(np.sqrt(np.sum((a - b) ** 2, axis=0))))


def weighted_sum(losses, weights=None) -> float:
    """Combine loss terms; equal unit weights when none are given."""
    losses = list(losses)
    if weights is None:
        weights = [1.0] * len(losses)
    weights = list(weights)
    if len(weights) != len(losses):
        raise LengthMismatch(f"{len(weights)} weights for {len(losses)} losses")
    return float(math.fsum(w * l for w, l in zip(weights, losses)))


def refinement_loss(point_loss: float, mask: float, flow: float, weights=(1.0, 1.0, 1.0)) -> float:
    return weighted_sum((point_loss, mask, flow), weights)
