"""Stabilizing actor-critic learning for sampled nonlinear systems with unknown parameters."""

from .aclf import AdaptiveClf, verify_decay_backup
from .actor import ActorConfig, ControlBox, solve_actor
from .critic import Regressor, WeightSet, gd_update, lsq_update
from .dynamics import ShConfig, SystemModel, integrate_sh
from .errors import (
    ConfigurationError,
    ContainmentError,
    InfeasibleBoundsError,
    IntegrationBlowupError,
    ModelSingularityError,
    StabilRLError,
)
from .problems import cruise_problem, get_problem, traction_problem
from .runner import RunConfig, SweepSpec, compare, cost_ratio, sweep
from .supervisor import LoopConfig, StabilityBounds, TrajectoryLog, compute_bounds, run

__version__ = "0.1.0"

__all__ = [
    "AdaptiveClf",
    "verify_decay_backup",
    "ActorConfig",
    "ControlBox",
    "solve_actor",
    "Regressor",
    "WeightSet",
    "gd_update",
    "lsq_update",
    "ShConfig",
    "SystemModel",
    "integrate_sh",
    "ConfigurationError",
    "ContainmentError",
    "InfeasibleBoundsError",
    "IntegrationBlowupError",
    "ModelSingularityError",
    "StabilRLError",
    "cruise_problem",
    "get_problem",
    "traction_problem",
    "RunConfig",
    "SweepSpec",
    "compare",
    "cost_ratio",
    "sweep",
    "LoopConfig",
    "StabilityBounds",
    "TrajectoryLog",
    "compute_bounds",
    "run",
]
