"""Convex regression estimators with a sup-norm gradient penalty.

Three estimators share one finite-dimensional form.  Decision variables are
fitted values ``f_i``, slopes ``beta_i`` (one per design point) and, for the
penalized and minimum-bound problems, a common slope bound ``M``:

* ``fit_a`` (penalized):      min  mean (y_i - f_i)^2 + lam * M
* ``fit_b`` (bounded):        min  mean (y_i - f_i)^2   with  M fixed to u
* ``fit_c`` (minimum bound):  min  M   s.t.  mean (y_i - f_i)^2 <= s

all subject to ``f_i >= f_j + beta_j'(X_i - X_j)`` and ``|beta_i|_inf <= M``.
The fitted function is the max-affine interpolant of the pieces
``(X_i, f_i, beta_i)``.  ``fit_c`` is computed by bisection on ``u`` over
``fit_b``, using that the bounded fit's error is nonincreasing in ``u``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import qp
from .max_affine import Box, MaxAffineModel, evaluate, j_inf, prune_redundant, subgradients

logger = logging.getLogger(__name__)


class SolverFailure(RuntimeError):
    def __init__(self, message: str, solution: qp.QpSolution | None = None):
        super().__init__(message)
        self.solution = solution


class InfeasibleError(ValueError):
    """No convex fit reaches the requested error bound."""

    def __init__(self, s: float, min_sse: float):
        super().__init__(f"error bound s={s:.6g} is below the least achievable SSE {min_sse:.6g}")
        self.s = s
        self.min_sse = min_sse


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    domain: Box
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        X = np.array(self.X, dtype=float).reshape(y.size, -1) if y.size else np.zeros((0, self.domain.d))
        if y.size < 1:
            raise ValueError("dataset needs at least one observation")
        if X.shape[1] != self.domain.d:
            raise ValueError(f"points have dimension {X.shape[1]}, domain has {self.domain.d}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        if not self.domain.contains(X):
            raise ValueError("design points must lie in the domain")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.domain.d

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], self.domain, dict(self.meta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{k + 1}" for k in range(self.d)] + ["y"])
        for xi, yi in zip(self.X, self.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, domain: Optional[Box] = None) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty CSV")
        header = [h.strip() for h in rows[0]]
        if len(header) < 2 or header[-1] != "y" or header[:-1] != [f"x{k + 1}" for k in range(len(header) - 1)]:
            raise ValueError(f"expected header x1,...,xd,y; got {','.join(header)}")
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        d = len(header) - 1
        data = data.reshape(-1, d + 1)
        X, y = data[:, :d], data[:, d]
        if domain is None:
            domain = Box(float(X.min()), float(X.max()), d) if X.min() < X.max() else Box(float(X.min()) - 0.5, float(X.max()) + 0.5, d)
        return cls(X, y, domain)


@dataclass(frozen=True)
class FitSpec:
    estimator: str
    hyperparameter: float
    tol: qp.SolverTolerances = qp.SolverTolerances()
    bisection_tol: float = 1e-4

    def __post_init__(self):
        if self.estimator not in ("A", "B", "C"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if not self.hyperparameter >= 0:
            raise ValueError("hyperparameter must be nonnegative")


@dataclass
class FitResult:
    model: MaxAffineModel
    fitted: np.ndarray  # f_hat at the design points
    sse: float
    grad_bound: float
    estimator: str
    hyperparameter: float
    solution: Optional[qp.QpSolution] = None
    solver_bound: float = float("nan")  # raw M from the solver (problem A)
    bisection: list = field(default_factory=list)  # (u, sse) pairs tried by fit_c

    @property
    def max_slope(self) -> float:
        return j_inf(self.model)

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "sse": self.sse, "grad_bound": self.grad_bound,
                "estimator": self.estimator, "hyperparameter": self.hyperparameter}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "FitResult":
        model = MaxAffineModel.from_dict(obj["model"])
        return cls(model, evaluate(model, model.anchors), float(obj["sse"]), float(obj["grad_bound"]),
                   obj["estimator"], float(obj["hyperparameter"]))


# ---------------------------------------------------------------- problem builders

def _pair_index(n: int):
    """All ordered pairs (i, j), i != j, row-major; and a lookup i*(n-1)+j' for row ids."""
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mask = ii != jj
    return ii[mask], jj[mask]


def _pair_row(i, j, n):
    j = np.asarray(j)
    return np.asarray(i) * (n - 1) + np.where(j < i, j, j - 1)


def _neighbour_pairs(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairs likely to carry active convexity rows: sort-order neighbours in 1-D,
    nearest neighbours otherwise."""
    n, d = X.shape
    if n < 2:
        return np.zeros(0, int), np.zeros(0, int)
    if d == 1:
        order = np.argsort(X[:, 0], kind="stable")
        a, b = order[:-1], order[1:]
    else:
        k = min(n - 1, 2 * d + 2)
        dist = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
        np.fill_diagonal(dist, np.inf)
        nbrs = np.argsort(dist, axis=1, kind="stable")[:, :k]
        a = np.repeat(np.arange(n), k)
        b = nbrs.ravel()
    return np.concatenate([a, b]), np.concatenate([b, a])


def _build(data: Dataset, lam: Optional[float], u: Optional[float]) -> qp.QpProblem:
    """Variables z = (f_1..f_n, beta_1..beta_n, [M]); M only when ``lam`` is given."""
    n, d = data.n, data.d
    X, y = data.X, data.y
    with_m = lam is not None
    nv = n + n * d + (1 if with_m else 0)
    mcol = nv - 1

    # convexity: f_j - f_i + beta_j'(X_i - X_j) <= 0 for every ordered pair i != j
    pi, pj = _pair_index(n)
    npairs = pi.size
    rows_c = np.repeat(np.arange(npairs), 2 + d)
    cols_c = np.column_stack([pj, pi] + [n + pj * d + k for k in range(d)]).ravel()
    vals_c = np.column_stack([np.ones(npairs), -np.ones(npairs)] + [X[pi, k] - X[pj, k] for k in range(d)]).ravel()

    # box: +-beta_{i,k} <= M  (or <= u)
    nb = n * d
    bcols = n + np.arange(nb)
    r0 = npairs
    rows_b = [r0 + np.arange(nb), r0 + nb + np.arange(nb)]
    cols_b = [bcols, bcols]
    vals_b = [np.ones(nb), -np.ones(nb)]
    if with_m:
        rows_b += [r0 + np.arange(nb), r0 + nb + np.arange(nb), np.array([r0 + 2 * nb])]
        cols_b += [np.full(nb, mcol), np.full(nb, mcol), np.array([mcol])]
        vals_b += [-np.ones(nb), -np.ones(nb), np.array([-1.0])]
        m = npairs + 2 * nb + 1
        rhs = np.zeros(m)
    else:
        m = npairs + 2 * nb
        rhs = np.concatenate([np.zeros(npairs), np.full(2 * nb, float(u))])

    A = sp.csr_matrix((np.concatenate([vals_c] + vals_b),
                       (np.concatenate([rows_c] + rows_b), np.concatenate([cols_c] + cols_b))),
                      shape=(m, nv))
    Q = sp.diags(np.concatenate([np.full(n, 2.0 / n), np.zeros(nv - n)])).tocsc()
    c = np.zeros(nv)
    c[:n] = -2.0 * y / n
    if with_m:
        c[mcol] = lam

    na, nb_ = _neighbour_pairs(X)
    hint = np.concatenate([_pair_row(na, nb_, n), np.arange(npairs, m)]) if n > 1 else np.arange(m)
    return qp.QpProblem(Q, c, A, rhs, working_set=hint, psd_certified=True)


def build_problem_a(data: Dataset, lam: float) -> qp.QpProblem:
    if not lam >= 0:
        raise ValueError("penalty weight must be nonnegative")
    return _build(data, float(lam), None)


def build_problem_b(data: Dataset, u: float) -> qp.QpProblem:
    if not u >= 0:
        raise ValueError("slope bound must be nonnegative")
    return _build(data, None, float(u))


# ---------------------------------------------------------------- fits

def sse(data: Dataset, model: MaxAffineModel) -> float:
    """Mean squared residual of ``model`` at the design points."""
    r = data.y - evaluate(model, data.X)
    return float(np.mean(r * r))


def _solve(problem: qp.QpProblem, tol: qp.SolverTolerances) -> qp.QpSolution:
    sol = qp.solve_qp(problem, tol)
    if sol.status == qp.INFEASIBLE:
        raise SolverFailure("convex regression QP reported infeasible", sol)
    if not sol.optimal:
        raise SolverFailure(
            f"QP solve failed: status={sol.status}, primal={sol.primal_residual:.3g}, "
            f"kkt={sol.stationarity_residual:.3g}", sol)
    return sol


def _assemble(data: Dataset, z: np.ndarray, bound: float) -> tuple[MaxAffineModel, np.ndarray]:
    n, d = data.n, data.d
    f = z[:n]
    beta = z[n:n + n * d].reshape(n, d)
    model = prune_redundant(MaxAffineModel(data.X, f, beta, bound, data.domain))
    return model, f.copy()


def fit_a(data: Dataset, lam: float, tol: qp.SolverTolerances = qp.SolverTolerances()) -> FitResult:
    """Penalized fit: ``min mean (y - f)^2 + lam * J_inf(f)`` over convex f."""
    sol = _solve(build_problem_a(data, lam), tol)
    n, d = data.n, data.d
    raw_m = float(sol.z[-1])
    beta = sol.z[n:n + n * d]
    # M above the largest |beta| only costs lam * gap, so lowering it keeps feasibility
    bound = float(np.abs(beta).max(initial=0.0))
    model, f = _assemble(data, sol.z, bound)
    # pruning removes pieces that tie at their anchor; the remaining slopes also
    # certify every anchor, so the smaller bound is feasible with equal fit error
    bound = j_inf(model)
    model = MaxAffineModel(model.anchors, model.values, model.slopes, bound, model.domain)
    r = data.y - f
    return FitResult(model, f, float(np.mean(r * r)), bound, "A", float(lam), sol, raw_m)


def fit_b(data: Dataset, u: float, tol: qp.SolverTolerances = qp.SolverTolerances()) -> FitResult:
    """Bounded fit: least squares over convex f with ``J_inf(f) <= u``."""
    sol = _solve(build_problem_b(data, u), tol)
    model, f = _assemble(data, sol.z, float(u))
    r = data.y - f
    return FitResult(model, f, float(np.mean(r * r)), float(u), "B", float(u), sol)


_LSE_CHECK = 64.0


def fit_c(data: Dataset, s: float, tol: qp.SolverTolerances = qp.SolverTolerances(),
          bisection_tol: float = 1e-4, u_max: float = 1e8) -> FitResult:
    """Smallest slope bound whose bounded fit has mean squared error <= s.

    Bisection on u over :func:`fit_b`: the bracket starts at [0, 1] and its
    upper end doubles until feasible; it is then halved until its width is at
    most ``bisection_tol * max(1, upper)``.  The returned model is the bounded
    fit at the upper end and ``grad_bound`` is that upper end.
    """
    if not s >= 0:
        raise ValueError("error bound must be nonnegative")
    target = s + tol.feas_tol
    trace = []

    def run(u):
        res = fit_b(data, u, tol)
        trace.append((u, res.sse))
        return res

    flat = run(0.0)
    if flat.sse <= target:
        return _as_c(flat, s, 0.0, trace)

    lo, hi = 0.0, 1.0
    best = run(hi)
    cap = None
    while best.sse > target:
        lo, hi = hi, 2.0 * hi
        if cap is None and hi >= _LSE_CHECK:
            # steep bounds scale the QP badly; the unconstrained fit settles feasibility
            # and its largest slope is a bound that is sure to be feasible
            lse = fit_a(data, 0.0, tol)
            if lse.sse > target:
                raise InfeasibleError(s, lse.sse)
            n, d = data.n, data.d
            cap = float(np.abs(lse.solution.z[n:n + n * d]).max(initial=0.0))
        if cap is not None and hi >= cap:
            hi = max(cap, lo)
        if hi > u_max:
            raise InfeasibleError(s, fit_a(data, 0.0, tol).sse)
        best = run(hi)
        if cap is not None and hi == cap and best.sse > target:
            # solver noise at the cap: accept the unconstrained fit's bound
            raise InfeasibleError(s, best.sse)
    while hi - lo > bisection_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        res = run(mid)
        if res.sse <= target:
            hi, best = mid, res
        else:
            lo = mid
    return _as_c(best, s, hi, trace)


def _as_c(res: FitResult, s: float, u: float, trace) -> FitResult:
    model = MaxAffineModel(res.model.anchors, res.model.values, res.model.slopes, u, res.model.domain)
    return FitResult(model, res.fitted, res.sse, u, "C", float(s), res.solution, bisection=list(trace))


def fit(data: Dataset, spec: FitSpec) -> FitResult:
    if spec.estimator == "A":
        return fit_a(data, spec.hyperparameter, spec.tol)
    if spec.estimator == "B":
        return fit_b(data, spec.hyperparameter, spec.tol)
    return fit_c(data, spec.hyperparameter, spec.tol, spec.bisection_tol)


def fitted_subgradients(result: FitResult, points) -> np.ndarray:
    return subgradients(result.model, points)
