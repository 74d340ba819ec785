"""Data-driven choice of the error bound s, slope bound u and penalty weight lambda."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from . import qp
from .estimators import Dataset, fit_a, fit_c
from .max_affine import evaluate, j_inf

logger = logging.getLogger(__name__)

PAPER_LAMBDAS = (0.0, 1e-10, 1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e6)


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionSpec:
    """``r`` equal cells per axis of the domain; ``weights`` per cell or "uniform".

    Explicit weights are cell probabilities in C order over the ``r**d`` cells.
    """

    r: int
    weights: Union[str, Sequence[float]] = "uniform"

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if not isinstance(self.weights, str):
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError("cell weights must be nonnegative and sum to 1")
        elif self.weights != "uniform":
            raise ValueError("weights must be 'uniform' or a sequence of probabilities")


def cell_index(data: Dataset, r: int) -> np.ndarray:
    """Flat C-order cell id of each point for the r-per-axis grid; the upper face closes the last cell."""
    dom = data.domain
    k = np.floor((data.X - dom.a) / (dom.b - dom.a) * r).astype(int)
    k = np.clip(k, 0, r - 1)
    return np.ravel_multi_index(tuple(k.T), (r,) * data.d)


def estimate_s_partition(data: Dataset, partition: PartitionSpec) -> float:
    """Weighted mean of within-cell sample variances of y.

    Cells holding fewer than two points are skipped and the remaining weights
    renormalized.
    """
    cells = cell_index(data, partition.r)
    ncells = partition.r ** data.d
    if isinstance(partition.weights, str):
        weights = np.ones(ncells)
    else:
        weights = np.asarray(partition.weights, dtype=float)
        if weights.size != ncells:
            raise ValueError(f"expected {ncells} cell weights, got {weights.size}")
    num = den = 0.0
    for c in np.unique(cells):
        ys = data.y[cells == c]
        if ys.size < 2 or weights[c] == 0:
            continue
        num += weights[c] * np.var(ys, ddof=1)
        den += weights[c]
    if den == 0:
        raise EstimationError("no partition cell contains two or more observations")
    return float(num / den)


def estimate_s_replication(groups, density: Callable = None) -> float:
    """Density-weighted mean of per-point replication variances.

    ``groups`` is a sequence of ``(x, ys)`` with at least two replicated
    responses per point; ``density`` maps x to its design density (uniform
    when omitted).
    """
    num = den = 0.0
    for x, ys in groups:
        ys = np.asarray(ys, dtype=float)
        if ys.size < 2:
            raise EstimationError("every point needs at least two replications")
        w = 1.0 if density is None else float(density(x))
        num += w * np.var(ys, ddof=1)
        den += w
    if den <= 0:
        raise EstimationError("density weights sum to zero")
    return float(num / den)


def theoretical_s(sigma2: float, c: float, n: int) -> float:
    """``sigma2 + c * sqrt(log n / n)``."""
    if sigma2 < 0 or c < 0 or n < 2:
        raise ValueError("need sigma2 >= 0, c >= 0, n >= 2")
    return sigma2 + c * math.sqrt(math.log(n)) / math.sqrt(n)


def gaussian_subgaussian_constant(sigma2: float) -> float:
    """Smallest ``K^2 + sigma0^2`` certifying N(0, sigma2) noise as sub-Gaussian.

    For Gaussian noise ``K^2 (E exp(e^2/K^2) - 1) = K^2((1 - 2 sigma2/K^2)^(-1/2) - 1)``;
    minimizing ``K^2`` plus that over ``K^2 > 2 sigma2`` gives ``K^2 = 3 sigma2``
    and a total of ``3^(3/2) sigma2``.
    """
    return 3.0 ** 1.5 * sigma2


def select_u_from_c(data: Dataset, s: float, tol: qp.SolverTolerances = qp.SolverTolerances(),
                    bisection_tol: float = 1e-4) -> float:
    """Slope bound for the bounded fit: the largest slope of the minimum-bound fit."""
    return j_inf(fit_c(data, s, tol, bisection_tol).model)


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold id per observation: a seeded shuffle cut into contiguous, near-equal blocks."""
    if folds < 1 or n < folds:
        raise ValueError(f"cannot split {n} points into {folds} nonempty folds")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = np.full(folds, n // folds)
    sizes[: n % folds] += 1
    ids = np.empty(n, dtype=int)
    ids[perm] = np.repeat(np.arange(folds), sizes)
    return ids


def cross_validate_lambda(data: Dataset, candidates: Sequence[float] = PAPER_LAMBDAS, folds: int = 5,
                          seed: int = 0, tol: qp.SolverTolerances = qp.SolverTolerances()):
    """k-fold CV for the penalty weight.

    Returns ``(best_lambda, curve)`` where ``curve[m]`` is the mean over folds
    of the held-out sum of squared errors for ``candidates[m]``.  Ties go to
    the earliest candidate.
    """
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise ValueError("no candidate penalty weights")
    ids = fold_assignment(data.n, folds, seed)
    curve = []
    for lam in candidates:
        total = 0.0
        for k in range(folds):
            train = data.subset(np.flatnonzero(ids != k))
            held = np.flatnonzero(ids == k)
            model = fit_a(train, lam, tol).model
            resid = data.y[held] - evaluate(model, data.X[held])
            total += float(np.sum(resid * resid))
        curve.append(total / folds)
    best = int(np.argmin(curve))  # argmin returns the first minimizer
    if candidates[best] == 0.0:
        logger.info("cross-validation selected lambda = 0")
    return candidates[best], curve


def lambda_schedule(n: int) -> float:
    """Deterministic penalty weight ``n^-0.8``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(n) ** -0.8


def default_r(n: int) -> int:
    """Cells for the variance partition: 8, 10, 16 at n = 120, 300, 400, else ceil(n/25) in [2, n/2]."""
    table = {120: 8, 300: 10, 400: 16}
    if n in table:
        return table[n]
    return int(max(1, min(max(2, math.ceil(n / 25)), n // 2)))
