"""Scenario-certified one-step prediction tubes for nonlinear systems.

The toolkit compresses a kernel hypothesis ball to a finite basis with
P-greedy selection, fits per-output interval predictors by convex
min-max optimization with exact binomial-tail sample-size certificates,
and validates the resulting tube model on a Van der Pol benchmark.
"""

from .kernels import Kernel
from .greedy import (
    PGreedySelector,
    DecayReport,
    decay_fit,
    fill_distance,
    power_all,
    theoretical_exponent,
)
from .scenario import (
    ScenarioCertificate,
    binomial_tail,
    min_samples_bisect,
    min_samples_bound,
    union_bound,
)
from .socp import IpmSolution, ScenarioProgram, count_support, residuals, solve_ipm
from .simulator import Dataset, SimConfig, sample_dataset, step, vdp_rhs
from .pipeline import TubeModel, TubeRegressor, identify, propagate_corners, validate
from .planner import PlanConfig, plan, rollout_replanned, rollout_true

__version__ = "0.1.0"

__all__ = [
    "Kernel",
    "PGreedySelector",
    "DecayReport",
    "decay_fit",
    "fill_distance",
    "power_all",
    "theoretical_exponent",
    "ScenarioCertificate",
    "binomial_tail",
    "min_samples_bisect",
    "min_samples_bound",
    "union_bound",
    "IpmSolution",
    "ScenarioProgram",
    "count_support",
    "residuals",
    "solve_ipm",
    "Dataset",
    "SimConfig",
    "sample_dataset",
    "step",
    "vdp_rhs",
    "TubeModel",
    "TubeRegressor",
    "identify",
    "propagate_corners",
    "validate",
    "PlanConfig",
    "plan",
    "rollout_replanned",
    "rollout_true",
]
