"""Figures for simulation reports. Files only; no interactive backends."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STAGE_COLORS = {"iml": "#d95f02", "iml+ir": "#7570b3", "iml+pgo": "#e7298a", "full": "#1b9e77"}

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_relative_poses(trace, path, stages=None):
    """Observed-robot positions in the camera frame: ground truth vs stage estimates.

    Only ``A_observed`` rendezvous are drawn so every point shares one frame.
    """
    stages = stages or trace.stages
    keep = [k for k, d in enumerate(trace.directions) if d == "A_observed"]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.0))
        gt = np.array([[trace.gt_rel[k].x, trace.gt_rel[k].y] for k in keep]).reshape(-1, 2)
        ax.plot(gt[:, 0], gt[:, 1], "k-", lw=1.0, label="ground truth")
        for s in stages:
            est = np.array([[trace.estimates[s][k].x, trace.estimates[s][k].y] for k in keep]).reshape(-1, 2)
            ax.plot(est[:, 0], est[:, 1], ".", ms=4, color=STAGE_COLORS.get(s), label=s)
        ax.plot([0], [0], "k^", ms=6)
        ax.set_xlabel("forward (m)")
        ax.set_ylabel("left (m)")
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend(loc="best", frameon=False)
        _save(fig, path)


def plot_error_violins(errors: dict[str, np.ndarray], path):
    """Violin plot of absolute errors per DoF; ``errors[stage]`` rows are (|dx| m, |dy| m, |dyaw| rad)."""
    labels = ["|dx| (cm)", "|dy| (cm)", "|dyaw| (deg)"]
    scale = [100.0, 100.0, 180.0 / math.pi]
    stages = list(errors)
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 3, figsize=(8.0, 2.8))
        for j, ax in enumerate(axes):
            data = [np.asarray(errors[s])[:, j] * scale[j] for s in stages]
            parts = ax.violinplot(data, showmedians=True)
            for body, s in zip(parts["bodies"], stages):
                body.set_facecolor(STAGE_COLORS.get(s, "grey"))
                body.set_alpha(0.6)
            ax.set_xticks(range(1, len(stages) + 1), stages, rotation=30)
            ax.set_ylabel(labels[j])
        _save(fig, path)


def plot_cost_history(history, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.0, 2.8))
        h = np.maximum(np.asarray(history, dtype=float), np.finfo(float).tiny)
        ax.semilogy(range(len(h)), h, "o-", ms=3)
        ax.set_xlabel("accepted step")
        ax.set_ylabel("cost")
        _save(fig, path)
