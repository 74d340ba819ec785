"""Replicated M/M/1 benchmark: MAE statistics for four estimator configurations.

Configurations per replication:

* ``A1`` penalized fit with lambda = n^-0.8
* ``A2`` penalized fit with lambda chosen by 5-fold cross-validation
* ``B``  bounded fit with u taken from the ``C`` fit's largest slope
* ``C``  minimum-bound fit with s from the partition variance estimate
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import qp
from .estimators import InfeasibleError, SolverFailure, fit_a, fit_b, fit_c
from .hyperparams import (PAPER_LAMBDAS, PartitionSpec, cross_validate_lambda, default_r,
                          estimate_s_partition, lambda_schedule)
from .max_affine import MaxAffineModel, active_pieces, evaluate, j_inf, subgradients
from .queue_sim import generate_dataset, grad_f0, true_f0

logger = logging.getLogger(__name__)

CONFIGS = ("A1", "A2", "B", "C")
Z95 = 1.96


# ---------------------------------------------------------------- metrics

def mae_value(model: MaxAffineModel, points, f0) -> float:
    """Largest |f_hat(X_i) - f0(X_i)| over the points."""
    X = np.asarray(points, dtype=float).reshape(-1, model.dim)
    if X.shape[0] == 0:
        raise ValueError("no evaluation points")
    truth = np.asarray(f0(X[:, 0] if model.dim == 1 else X), dtype=float).ravel()
    return float(np.abs(evaluate(model, X) - truth).max())


def mae_subgradient(model: MaxAffineModel, points, grad_f) -> float:
    """Largest sup-norm gap between the model's subgradient and the true gradient."""
    X = np.asarray(points, dtype=float).reshape(-1, model.dim)
    if X.shape[0] == 0:
        raise ValueError("no evaluation points")
    truth = np.asarray(grad_f(X[:, 0] if model.dim == 1 else X), dtype=float).reshape(X.shape)
    return float(np.abs(subgradients(model, X) - truth).max())


def confidence_interval(values: Sequence[float], z: float = Z95) -> tuple[float, float]:
    """(mean, z * sample std / sqrt(count)) with the n-1 divisor."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values for a confidence interval")
    return float(v.mean()), float(z * v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class BoxStats:
    q1: float
    median: float
    q3: float
    whiskers: tuple
    outliers: list


def box_stats(values: Sequence[float]) -> BoxStats:
    """Quartiles (linear interpolation), 1.5 IQR fences, whiskers at the extreme non-outliers."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("box_stats of an empty sample")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo) & (v <= hi)]
    outliers = sorted(float(x) for x in v[(v < lo) | (v > hi)])
    return BoxStats(float(q1), float(med), float(q3), (float(inside.min()), float(inside.max())), outliers)


# ---------------------------------------------------------------- replications

@dataclass(frozen=True)
class ExperimentPlan:
    n: int
    reps: int
    customers: int = 5000
    base_seed: int = 0
    cv_candidates: tuple = PAPER_LAMBDAS
    folds: int = 5
    tol: qp.SolverTolerances = qp.SolverTolerances()
    bisection_tol: float = 1e-4
    jobs: int = 1


def replication_seed(base_seed: int, n: int, rep: int) -> int:
    return int(np.random.SeedSequence([base_seed, n, rep]).generate_state(1)[0])


@dataclass
class Replication:
    rep: int
    seed: int
    ok: bool
    reason: str = ""
    value_mae: dict = field(default_factory=dict)
    grad_mae: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)
    # worst solver residuals and invariant gaps over every fit in this replication
    checks: dict = field(default_factory=dict)


def edge_slope_sup(model: MaxAffineModel) -> float:
    """sup |f'| on [a, b] for a convex 1-D model, from the one-sided derivatives at the ends.

    The derivative of a convex function is nondecreasing, so its largest
    magnitude is |f'(a+)| or |f'(b-)|: the steepest piece active at a and the
    flattest piece active at b.
    """
    dom = model.domain
    right = model.slopes[active_pieces(model, dom.a), 0].max()
    left = model.slopes[active_pieces(model, dom.b), 0].min()
    return float(max(abs(right), abs(left)))


def _fit_checks(res, data, checks: dict):
    sol = res.solution
    if sol is not None:
        checks["primal"] = max(checks.get("primal", 0.0), sol.primal_residual)
        checks["kkt"] = max(checks.get("kkt", 0.0), sol.stationarity_residual)
    gap = np.abs(evaluate(res.model, data.X) - res.fitted) / (1.0 + np.abs(res.fitted))
    checks["interp"] = max(checks.get("interp", 0.0), float(gap.max()))
    excess = j_inf(res.model) - res.grad_bound
    checks["slope_excess"] = max(checks.get("slope_excess", -math.inf), float(excess))
    if res.estimator == "A":
        gap = abs(j_inf(res.model) - res.grad_bound)
        if res.model.dim == 1:
            gap = max(gap, abs(edge_slope_sup(res.model) - res.grad_bound))
        checks["bound_gap"] = max(checks.get("bound_gap", 0.0), gap)
    # convexity probes on a fixed pseudo-random set of pairs in the domain
    dom = res.model.domain
    rng = np.random.default_rng(0)
    p = rng.uniform(dom.a, dom.b, (64, dom.d))
    q = rng.uniform(dom.a, dom.b, (64, dom.d))
    fp, fq = evaluate(res.model, p), evaluate(res.model, q)
    scale = 1.0 + np.abs(fp) + np.abs(fq)
    mid = (evaluate(res.model, 0.5 * (p + q)) - 0.5 * (fp + fq)) / scale
    checks["midpoint"] = max(checks.get("midpoint", -math.inf), float(mid.max()))
    lin = fp + np.einsum("md,md->m", subgradients(res.model, p), q - p)
    checks["subgrad"] = max(checks.get("subgrad", -math.inf), float(((lin - fq) / scale).max()))
    if res.bisection:
        trace = sorted(res.bisection)
        rise = max((b[1] - a[1] for a, b in zip(trace, trace[1:])), default=0.0)
        checks["sse_rise"] = max(checks.get("sse_rise", -math.inf), float(rise))


def run_replication(plan: ExperimentPlan, rep: int) -> Replication:
    seed = replication_seed(plan.base_seed, plan.n, rep)
    out = Replication(rep, seed, ok=False)
    data = generate_dataset(plan.n, plan.customers, seed)
    x = data.X
    try:
        s = estimate_s_partition(data, PartitionSpec(default_r(plan.n)))
        out.hyper["s"] = s
        fc = fit_c(data, s, plan.tol, plan.bisection_tol)
        u = j_inf(fc.model)
        fb = fit_b(data, u, plan.tol)
        lam1 = lambda_schedule(plan.n)
        fa1 = fit_a(data, lam1, plan.tol)
        lam2, curve = cross_validate_lambda(data, plan.cv_candidates, plan.folds, seed, plan.tol)
        fa2 = fit_a(data, lam2, plan.tol)
    except InfeasibleError as exc:
        out.reason = f"infeasible: {exc}"
        logger.info("n=%d rep=%d excluded (%s)", plan.n, rep, out.reason)
        return out
    except SolverFailure as exc:
        out.reason = f"solver: {exc}"
        logger.warning("n=%d rep=%d excluded (%s)", plan.n, rep, out.reason)
        return out
    out.hyper.update({"u": u, "M_c": fc.grad_bound, "lambda1": lam1, "lambda2": lam2, "cv_curve": curve})
    fits = {"A1": fa1, "A2": fa2, "B": fb, "C": fc}
    for name, res in fits.items():
        out.value_mae[name] = mae_value(res.model, x, true_f0)
        out.grad_mae[name] = mae_subgradient(res.model, x, grad_f0)
        _fit_checks(res, data, out.checks)
    out.checks["c_sse_excess"] = fc.sse - s
    out.ok = True
    return out


def _summary(values):
    if len(values) < 2:
        return {"mean": float(np.mean(values)) if values else float("nan"), "half_width": float("nan")}
    mean, hw = confidence_interval(values)
    box = box_stats(values)
    return {"mean": mean, "half_width": hw, "box": asdict(box)}


def run_replications(plan: ExperimentPlan) -> dict:
    """Run ``plan.reps`` replications at one n and aggregate in replication order."""
    if plan.reps < 2:
        raise ValueError("need at least two replications")
    if plan.jobs > 1:
        with ProcessPoolExecutor(plan.jobs) as pool:
            reps = list(pool.map(run_replication, [plan] * plan.reps, range(plan.reps)))
    else:
        reps = [run_replication(plan, r) for r in range(plan.reps)]
    good = [r for r in reps if r.ok]
    report = {
        "n": plan.n, "reps": plan.reps, "customers": plan.customers, "base_seed": plan.base_seed,
        "completed": len(good), "failed": [{"rep": r.rep, "seed": r.seed, "reason": r.reason} for r in reps if not r.ok],
        "configs": {},
        "replications": [asdict(r) for r in reps],
    }
    for name in CONFIGS:
        vals = [r.value_mae[name] for r in good]
        grads = [r.grad_mae[name] for r in good]
        report["configs"][name] = {"value_mae": vals, "grad_mae": grads,
                                   "value": _summary(vals), "grad": _summary(grads)}
    report["lambda_zero_selected"] = sum(1 for r in good if r.hyper.get("lambda2") == 0.0)
    return report


def run_experiment(n_list: Sequence[int], reps: int, customers: int = 5000, base_seed: int = 0,
                   jobs: int = 1, **plan_kw) -> dict:
    return {"runs": [run_replications(ExperimentPlan(n, reps, customers, base_seed, jobs=jobs, **plan_kw))
                     for n in n_list]}


# ---------------------------------------------------------------- output

def table_csv(experiment: dict, metric: str) -> str:
    """Rows n, columns A1 A2 B C, cells ``mean±half_width``; metric is "value" or "grad"."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", *CONFIGS])
    digits = 3 if metric == "value" else 2
    for run in experiment["runs"]:
        cells = []
        for name in CONFIGS:
            st = run["configs"][name][metric]
            cells.append(f"{st['mean']:.{digits}f}±{st['half_width']:.{digits}f}")
        w.writerow([run["n"], *cells])
    return buf.getvalue()


def raw_csv(experiment: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "rep", "seed", "config", "value_mae", "grad_mae"])
    for run in experiment["runs"]:
        for r in run["replications"]:
            if not r["ok"]:
                continue
            for name in CONFIGS:
                w.writerow([run["n"], r["rep"], r["seed"], name, repr(r["value_mae"][name]), repr(r["grad_mae"][name])])
    return buf.getvalue()


def report_json(experiment: dict) -> str:
    return json.dumps(experiment, indent=1, sort_keys=True)
