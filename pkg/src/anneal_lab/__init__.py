"""Stepsize schedules, misspecification-robust SGD bounds, and grid-search experiments."""

__version__ = "0.1.0"

from anneal_lab.bounds import (  # noqa: E402
    BoundReport,
    ProblemScales,
    coefficient_curve,
    lipschitz_bound,
    smooth_bound,
    solve_optimal_tau,
)
from anneal_lab.schedules import Schedule, TailFunctions, TailMode, parse_schedule  # noqa: E402
from anneal_lab.sgd import StepsizePlan, SgdRun, run_sgd  # noqa: E402

__all__ = [
    "BoundReport",
    "ProblemScales",
    "Schedule",
    "SgdRun",
    "StepsizePlan",
    "TailFunctions",
    "TailMode",
    "coefficient_curve",
    "lipschitz_bound",
    "parse_schedule",
    "run_sgd",
    "smooth_bound",
    "solve_optimal_tau",
]
