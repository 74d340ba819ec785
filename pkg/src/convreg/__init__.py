"""Convex regression with a sup-norm subgradient penalty."""

from .max_affine import Box, MaxAffineModel, evaluate, j_inf, subdifferential_extremes, subgradient
from .estimators import Dataset, FitResult, FitSpec, fit, fit_a, fit_b, fit_c, sse
from .qp import QpProblem, QpSolution, SolverTolerances, check_feasible, solve_qp

__all__ = [
    "Box", "MaxAffineModel", "evaluate", "j_inf", "subdifferential_extremes", "subgradient",
    "Dataset", "FitResult", "FitSpec", "fit", "fit_a", "fit_b", "fit_c", "sse",
    "QpProblem", "QpSolution", "SolverTolerances", "check_feasible", "solve_qp",
]
