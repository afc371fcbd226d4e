"""Force-aware optimal trajectories on Riemannian configuration spaces."""

from riemspline.bvp import BvpProblem, SolveReport, SolvedTrajectory, SolverOptions, integrate, solve
from riemspline.control import CostModel, ExtremalState
from riemspline.estimator import TrajectoryOptimizer
from riemspline.geometry import DegenerateMetricError, MetricField, ScalarField
from riemspline.models import MechModel, two_link_model, ur5_model

__version__ = "0.1.0"

__all__ = [
    "BvpProblem",
    "CostModel",
    "DegenerateMetricError",
    "ExtremalState",
    "MechModel",
    "MetricField",
    "ScalarField",
    "SolveReport",
    "SolvedTrajectory",
    "SolverOptions",
    "TrajectoryOptimizer",
    "integrate",
    "solve",
    "two_link_model",
    "ur5_model",
]
