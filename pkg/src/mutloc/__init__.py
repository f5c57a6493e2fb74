"""Rendezvous-based mutual localization for two ground robots.

Submodules: ``geometry`` (SE(2)/SE(3)), ``kernels`` (anisotropic convolution
and AIncep blocks with analytic gradients), ``losses``, ``refinement``
(iterative pose refinement), ``posegraph`` (gating, construction, LM
solver), ``simulator``, ``metrics``, ``formats``, ``config`` and ``cli``.
"""

__version__ = "0.1.0"

from .config import ScenarioConfig, load_config
from .errors import MutlocError
from .geometry import Pose2, Pose3
from .posegraph import PoseGraph, optimize, run_pose_graph
from .simulator import STAGES, run_pipeline

__all__ = [
    "__version__",
    "MutlocError",
    "Pose2",
    "Pose3",
    "PoseGraph",
    "STAGES",
    "ScenarioConfig",
    "load_config",
    "optimize",
    "run_pipeline",
    "run_pose_graph",
]
