"""Convex quadratic programming over linear inequality constraints.

Problems have the canonical form::

    minimize    0.5 * z' Q z + c' z
    subject to  A z <= b

with ``Q`` symmetric positive semidefinite (rank deficiency is fine).

The kernel is an interior-point solve (Clarabel) wrapped in a working-set
loop: only a subset of the rows of ``A`` is handed to the interior-point
method, the full row set is checked afterwards, and violated rows are added
until the iterate is feasible for the whole problem.  Convex regression
programs carry ``O(n^2)`` rows of which only ``O(n)`` are ever active, so this
keeps every sub-solve small.  Residuals are always measured against the full
problem, never against the working set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO, Union

import clarabel
import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

Matrix = Union[np.ndarray, sp.spmatrix]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"

# Below this many rows the whole problem goes to the interior-point method at once.
_FULL_SOLVE_ROWS = 4000


class QpError(ValueError):
    """Raised for malformed problems (shape mismatch, non-finite data, non-PSD)."""


@dataclass(frozen=True)
class SolverTolerances:
    feas_tol: float = 1e-6
    kkt_tol: float = 1e-6
    max_iter: int = 200_000


@dataclass(frozen=True, eq=False)
class QpProblem:
    """``min 0.5 z'Qz + c'z  s.t.  A z <= b``.

    ``working_set`` optionally names rows that are likely to be active; the
    solver starts from them instead of the full row set.  It never changes
    the problem, only how fast it is solved.  Builders that know ``Q`` is PSD
    by construction set ``psd_certified`` to skip the eigenvalue check.
    """

    quadratic: Matrix
    linear: np.ndarray
    rows: Matrix
    rhs: np.ndarray
    working_set: Optional[np.ndarray] = None
    psd_certified: bool = False

    def __post_init__(self):
        c = np.asarray(self.linear, dtype=float).ravel()
        object.__setattr__(self, "linear", c)
        nv = c.size
        Q = self.quadratic
        Q = sp.csc_matrix(Q, dtype=float) if sp.issparse(Q) else np.asarray(Q, dtype=float)
        if Q.shape != (nv, nv):
            raise QpError(f"quadratic has shape {Q.shape}, expected {(nv, nv)}")
        object.__setattr__(self, "quadratic", Q)

        A = self.rows
        if A is None:
            A = sp.csr_matrix((0, nv))
        if sp.issparse(A):
            A = sp.csr_matrix(A, dtype=float)
        else:
            A = np.asarray(A, dtype=float)
            if A.size == 0:
                A = A.reshape(0, nv)
        b = np.asarray(self.rhs, dtype=float).ravel()
        if A.shape != (b.size, nv):
            raise QpError(f"constraint rows have shape {A.shape}, expected {(b.size, nv)}")
        object.__setattr__(self, "rows", A)
        object.__setattr__(self, "rhs", b)

        dense_q = Q.toarray() if sp.issparse(Q) else Q
        a_data = A.data if sp.issparse(A) else A
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(dense_q))
                and np.all(np.isfinite(a_data)) and np.all(np.isfinite(b))):
            raise QpError("problem data must be finite")
        if not np.allclose(dense_q, dense_q.T, atol=1e-12, rtol=0.0):
            raise QpError("quadratic term must be symmetric")
        if not self.psd_certified and nv > 0:
            lam_min = np.linalg.eigvalsh(dense_q).min()
            if lam_min < -1e-8:
                raise QpError(f"quadratic term is not PSD (smallest eigenvalue {lam_min:.3g})")
        if self.working_set is not None:
            ws = np.unique(np.asarray(self.working_set, dtype=np.int64))
            if ws.size and (ws[0] < 0 or ws[-1] >= b.size):
                raise QpError("working_set index out of range")
            object.__setattr__(self, "working_set", ws)

    @property
    def num_vars(self) -> int:
        return self.linear.size

    @property
    def num_constraints(self) -> int:
        return self.rhs.size

    def objective(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ (self.quadratic @ z) + self.linear @ z)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(self.quadratic @ z).ravel() + self.linear


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    status: str
    primal_residual: float
    stationarity_residual: float
    duals: np.ndarray
    iterations: int = 0
    rounds: int = 0
    # (objective, max violation on the full row set) after each working-set round
    history: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def check_feasible(problem: QpProblem, z, tol: float = 0.0) -> float:
    """Largest constraint violation ``max_i (a_i'z - b_i)``, floored at zero.

    ``tol`` is subtracted before flooring, so violations up to ``tol`` count as 0.
    """
    z = np.asarray(z, dtype=float).ravel()
    if z.size != problem.num_vars:
        raise QpError(f"z has {z.size} entries, problem has {problem.num_vars} variables")
    if problem.num_constraints == 0:
        return 0.0
    viol = np.asarray(problem.rows @ z).ravel() - problem.rhs
    worst = float(viol.max())
    return worst if worst > tol else 0.0


def kkt_residuals(problem: QpProblem, z: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(primal residual, stationarity residual) of the pair (z, y) on the full problem.

    The stationarity residual folds in dual sign and complementarity so a
    single number certifies optimality together with the primal residual.
    """
    A, b = problem.rows, problem.rhs
    grad = problem.gradient(z)
    if problem.num_constraints == 0:
        return 0.0, float(np.abs(grad).max(initial=0.0))
    slack = b - np.asarray(A @ z).ravel()
    primal = float(max(0.0, -slack.min()))
    station = float(np.abs(grad + np.asarray(A.T @ y).ravel()).max(initial=0.0))
    dual_sign = float(max(0.0, -y.min()))
    comp = float(np.abs(y * np.maximum(slack, 0.0)).max())
    return primal, max(station, dual_sign, comp)


def _clarabel_settings(max_iter: int) -> "clarabel.DefaultSettings":
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.max_iter = max_iter
    s.tol_gap_abs = 1e-11
    s.tol_gap_rel = 1e-11
    s.tol_feas = 1e-11
    s.tol_ktratio = 1e-9
    s.presolve_enable = False
    return s


def _interior_point(problem: QpProblem, idx: np.ndarray, max_iter: int):
    """Solve the relaxation that keeps only rows ``idx``. Returns (z, y_sub, status, iters)."""
    nv = problem.num_vars
    Q = problem.quadratic
    P = sp.triu(sp.csc_matrix(Q)).tocsc()
    A = problem.rows[idx]
    A = sp.csc_matrix(A)
    b = problem.rhs[idx]
    cones = [clarabel.NonnegativeConeT(len(idx))] if len(idx) else []
    if not len(idx):
        A = sp.csc_matrix((0, nv))
    solver = clarabel.DefaultSolver(P, problem.linear, A, b, cones, _clarabel_settings(max_iter))
    sol = solver.solve()
    status = str(sol.status)
    z = np.asarray(sol.x, dtype=float)
    y = np.asarray(sol.z, dtype=float) if len(idx) else np.zeros(0)
    return z, y, status, int(sol.iterations)


def solve_qp(problem: QpProblem, tol: SolverTolerances = SolverTolerances()) -> QpSolution:
    """Solve ``problem``; see the module docstring for the method.

    Deterministic: the interior-point method and the working-set growth rule
    depend on nothing but the inputs.
    """
    m = problem.num_constraints
    if problem.working_set is not None and m > _FULL_SOLVE_ROWS:
        working = problem.working_set.copy()
    else:
        working = np.arange(m)

    history = []
    iters_used = 0
    rounds = 0
    # per-round row budget keeps the relaxation from ballooning in high dimension
    add_cap = max(5 * problem.num_vars, 200)
    while True:
        rounds += 1
        budget = tol.max_iter - iters_used
        if budget <= 0:
            break
        z, y_sub, status, its = _interior_point(problem, working, min(budget, 500))
        iters_used += its

        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            # a relaxation of the problem is infeasible, so the problem is too
            nan = np.full(problem.num_vars, np.nan)
            return QpSolution(nan, float("nan"), INFEASIBLE, float("inf"), float("inf"),
                              np.zeros(m), iters_used, rounds, history)
        if status in ("DualInfeasible", "AlmostDualInfeasible"):
            if working.size == m:
                raise QpError("objective is unbounded below on the feasible set")
            working = np.arange(m)
            continue

        viol = np.asarray(problem.rows @ z).ravel() - problem.rhs if m else np.zeros(0)
        worst = float(viol.max(initial=0.0))
        history.append((problem.objective(z), max(worst, 0.0)))
        if worst <= 0.1 * tol.feas_tol or working.size == m:
            break
        candidates = np.flatnonzero(viol > 0.1 * tol.feas_tol)
        candidates = np.setdiff1d(candidates, working, assume_unique=True)
        if candidates.size == 0:
            break
        if candidates.size > add_cap:
            order = np.argsort(-viol[candidates], kind="stable")
            candidates = np.sort(candidates[order[:add_cap]])
        working = np.union1d(working, candidates)
        logger.debug("round %d: max violation %.3g, working set %d/%d", rounds, worst, working.size, m)

    y = np.zeros(m)
    if m:
        y[working] = y_sub
    primal, station = kkt_residuals(problem, z, y)
    if primal <= tol.feas_tol and station <= tol.kkt_tol and status in ("Solved", "AlmostSolved"):
        out_status = OPTIMAL
    else:
        out_status = MAX_ITERATIONS
        logger.warning("QP not solved to tolerance: status=%s primal=%.3g kkt=%.3g",
                       status, primal, station)
    return QpSolution(z, problem.objective(z), out_status, primal, station, y,
                      iters_used, rounds, history)


def dump_problem(problem: QpProblem, fh: TextIO) -> None:
    """Write ``problem`` as plain text for external oracle scripts.

    Layout: ``QP num_vars num_constraints``, then the ``num_vars`` rows of Q,
    one line with c, then one line per constraint holding the row followed by
    its right-hand side.
    """
    nv, m = problem.num_vars, problem.num_constraints
    fh.write(f"QP {nv} {m}\n")
    Q = problem.quadratic.toarray() if sp.issparse(problem.quadratic) else problem.quadratic
    for row in Q:
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    fh.write(" ".join(repr(float(v)) for v in problem.linear) + "\n")
    A = problem.rows.toarray() if sp.issparse(problem.rows) else problem.rows
    for row, rhs in zip(A, problem.rhs):
        fh.write(" ".join(repr(float(v)) for v in row) + f" {float(rhs)!r}\n")


def load_problem(fh: TextIO) -> QpProblem:
    header = fh.readline().split()
    if len(header) != 3 or header[0] != "QP":
        raise QpError("not a QP dump: bad header")
    nv, m = int(header[1]), int(header[2])
    Q = np.array([[float(t) for t in fh.readline().split()] for _ in range(nv)]).reshape(nv, nv)
    c = np.array([float(t) for t in fh.readline().split()])
    data = [[float(t) for t in fh.readline().split()] for _ in range(m)]
    arr = np.array(data).reshape(m, nv + 1)
    return QpProblem(Q, c, arr[:, :nv], arr[:, nv])


def from_constraint_list(quadratic, linear, constraints: Sequence[tuple], **kw) -> QpProblem:
    """Build a problem from a list of ``(row, rhs)`` pairs encoding ``row'z <= rhs``."""
    c = np.asarray(linear, dtype=float)
    if constraints:
        A = np.array([np.asarray(r, dtype=float) for r, _ in constraints])
        b = np.array([float(v) for _, v in constraints])
    else:
        A, b = np.zeros((0, c.size)), np.zeros(0)
    return QpProblem(np.asarray(quadratic, dtype=float), c, A, b, **kw)
