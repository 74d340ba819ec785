"""Command-line front end: ``convreg simulate | fit | eval | experiment``.

Scalar results go to stdout as ``key=value`` lines.  Set ``CONVREG_LOG`` to a
logging level name (``DEBUG``, ``INFO``, ...) for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import qp
from .estimators import Dataset, InfeasibleError, SolverFailure, fit_a, fit_b, fit_c
from .experiments import raw_csv, report_json, run_experiment, table_csv
from .hyperparams import (PAPER_LAMBDAS, EstimationError, PartitionSpec, cross_validate_lambda,
                          default_r, estimate_s_partition, estimate_s_replication, theoretical_s)
from .max_affine import Box, MaxAffineModel, evaluate, subgradients
from .queue_sim import generate_dataset, grad_f0, true_f0

logger = logging.getLogger("convreg")

EXIT_USAGE = 2
EXIT_FAILED = 1


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return v


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text: str) -> list[int]:
    vals = [_positive_int(t) for t in text.split(",") if t.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit(**kv) -> None:
    for k, v in kv.items():
        print(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")


def _tolerances(args) -> qp.SolverTolerances:
    return qp.SolverTolerances(feas_tol=args.tol, kkt_tol=args.tol)


def _load_data(path: str, domain: str | None) -> Dataset:
    box = None
    if domain:
        a, b = (float(t) for t in domain.split(","))
        d = len(Path(path).read_text(encoding="utf-8").splitlines()[0].split(",")) - 1
        box = Box(a, b, d)
    else:
        meta = Path(path).with_suffix(".json")
        if meta.exists():
            dom = json.loads(meta.read_text(encoding="utf-8"))["domain"]
            box = Box(float(dom["a"]), float(dom["b"]), int(dom["d"]))
    return Dataset.from_csv(Path(path).read_text(encoding="utf-8"), box)


# ---------------------------------------------------------------- subcommands

def cmd_simulate(args) -> int:
    data = generate_dataset(args.n, args.customers, args.seed)
    out = Path(args.out)
    _write(out, data.to_csv())
    _write(out.with_suffix(".json"), json.dumps(data.meta, indent=1, sort_keys=True) + "\n")
    _emit(rows=data.n, csv=str(out), meta=str(out.with_suffix(".json")))
    return 0


def _estimate_s(args, data: Dataset) -> float:
    method = args.s_method
    if method == "fixed":
        raise EstimationError("a fixed s is passed with --s, not --auto")
    if method == "partition":
        return estimate_s_partition(data, PartitionSpec(args.r or default_r(data.n)))
    if method == "replication":
        keys = [tuple(row) for row in data.X]
        groups = {}
        for key, yi in zip(keys, data.y):
            groups.setdefault(key, []).append(yi)
        return estimate_s_replication([(np.array(k), ys) for k, ys in groups.items()])
    if args.sigma2 is None or args.c is None:
        raise EstimationError("--s-method theoretical needs --sigma2 and --c")
    return theoretical_s(args.sigma2, args.c, data.n)


def cmd_fit(args) -> int:
    data = _load_data(args.data, args.domain)
    tol = _tolerances(args)
    problem = args.problem.upper()
    extra = {}
    if problem == "A":
        if args.auto:
            lam, curve = cross_validate_lambda(data, args.cv_candidates, args.folds, args.seed, tol)
            extra["cv_curve"] = curve
        elif args.lam is None:
            raise EstimationError("problem a needs --lambda or --auto")
        else:
            lam = args.lam
        res = fit_a(data, lam, tol)
    elif problem == "B":
        if args.auto:
            s = _estimate_s(args, data)
            u = fit_c(data, s, tol, args.bisection_tol).max_slope
            extra["s"] = s
        elif args.u is None:
            raise EstimationError("problem b needs --u or --auto")
        else:
            u = args.u
        res = fit_b(data, u, tol)
    else:
        if args.auto:
            s = _estimate_s(args, data)
        elif args.s is None:
            raise EstimationError("problem c needs --s or --auto")
        else:
            s = args.s
        res = fit_c(data, s, tol, args.bisection_tol)
    out = Path(args.out)
    payload = res.to_dict()
    payload.update(extra)
    _write(out, json.dumps(payload, indent=1) + "\n")
    _emit(estimator=res.estimator, hyperparameter=res.hyperparameter, sse=res.sse,
          grad_bound=res.grad_bound, max_slope=res.max_slope, pieces=res.model.num_pieces, out=str(out))
    return 0


def cmd_eval(args) -> int:
    obj = json.loads(Path(args.model).read_text(encoding="utf-8"))
    model = MaxAffineModel.from_dict(obj["model"] if "model" in obj else obj)
    dom = model.domain
    if args.points:
        lines = Path(args.points).read_text(encoding="utf-8").splitlines()
        header = lines[0].split(",")
        xcols = [k for k, h in enumerate(header) if h.strip().startswith("x")]
        X = np.array([[float(line.split(",")[k]) for k in xcols] for line in lines[1:] if line.strip()])
        X = X.reshape(-1, model.dim)
    else:
        if model.dim != 1:
            raise EstimationError("--grid is only defined for one-dimensional models; use --points")
        X = np.linspace(dom.a, dom.b, args.grid)[:, None]
    vals = evaluate(model, X)
    grads = subgradients(model, X)
    cols = [f"x{k + 1}" for k in range(model.dim)] + ["fhat"] + [f"g{k + 1}" for k in range(model.dim)]
    table = [list(X[i]) + [vals[i]] + list(grads[i]) for i in range(X.shape[0])]
    if args.truth == "mm1":
        if model.dim != 1:
            raise EstimationError("the mm1 truth is one-dimensional")
        cols += ["f0", "df0"]
        for row, x in zip(table, X[:, 0]):
            row += [true_f0(x), grad_f0(x)]
    outside = int(sum(not dom.contains(x) for x in X))
    text = ",".join(cols) + "\n" + "".join(",".join(repr(float(v)) for v in row) + "\n" for row in table)
    _write(Path(args.out), text)
    _emit(rows=len(table), outside_domain=outside, out=args.out)
    return 0


def cmd_experiment(args) -> int:
    result = run_experiment(args.n_list, args.reps, args.customers, args.seed, jobs=args.jobs,
                            cv_candidates=tuple(args.cv_candidates), folds=args.folds,
                            tol=_tolerances(args))
    out = Path(args.out)
    _write(out / "report.json", report_json(result) + "\n")
    _write(out / "table_value_mae.csv", table_csv(result, "value"))
    _write(out / "table_grad_mae.csv", table_csv(result, "grad"))
    _write(out / "raw_mae.csv", raw_csv(result))
    for run in result["runs"]:
        c = run["configs"]["C"]["value"]
        _emit(n=run["n"], completed=run["completed"], failed=len(run["failed"]),
              c_value_mae=c["mean"], c_half_width=c["half_width"])
    _emit(out=str(out))
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=1e-6, help="feasibility and KKT tolerance")
    common.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)

    p = argparse.ArgumentParser(prog="convreg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate an M/M/1 dataset")
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--customers", type=_positive_int, default=5000)
    s.add_argument("--out", required=True, help="CSV path; metadata goes next to it as .json")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", parents=[common], help="fit a convex regression model")
    f.add_argument("--data", required=True)
    f.add_argument("--domain", help="a,b for the box [a,b]^d (default: sidecar JSON or data range)")
    f.add_argument("--problem", choices=["a", "b", "c"], required=True)
    hyper = f.add_mutually_exclusive_group(required=True)
    hyper.add_argument("--lambda", dest="lam", type=_nonneg_float)
    hyper.add_argument("--u", type=_nonneg_float)
    hyper.add_argument("--s", type=_nonneg_float)
    hyper.add_argument("--auto", action="store_true")
    f.add_argument("--s-method", choices=["partition", "replication", "theoretical", "fixed"], default="partition")
    f.add_argument("--r", type=_positive_int)
    f.add_argument("--sigma2", type=_nonneg_float)
    f.add_argument("--c", type=_nonneg_float)
    f.add_argument("--cv-candidates", type=_float_list, default=list(PAPER_LAMBDAS))
    f.add_argument("--folds", type=_positive_int, default=5)
    f.add_argument("--bisection-tol", type=float, default=1e-4)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", parents=[common], help="tabulate a fitted model")
    e.add_argument("--model", required=True)
    where = e.add_mutually_exclusive_group(required=True)
    where.add_argument("--grid", type=_positive_int)
    where.add_argument("--points")
    e.add_argument("--truth", choices=["mm1"])
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("experiment", parents=[common], help="replicated M/M/1 benchmark")
    x.add_argument("--n-list", type=_int_list, required=True)
    x.add_argument("--reps", type=_positive_int, required=True)
    x.add_argument("--customers", type=_positive_int, default=5000)
    x.add_argument("--cv-candidates", type=_float_list, default=list(PAPER_LAMBDAS))
    x.add_argument("--folds", type=_positive_int, default=5)
    x.add_argument("--out", required=True, help="output directory")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CONVREG_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "experiment" and args.reps < 2:
        parser.error("--reps must be at least 2")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        _emit(status="infeasible", s=exc.s, min_sse=exc.min_sse)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except SolverFailure as exc:
        sol = exc.solution
        if sol is not None:
            _emit(status=sol.status, primal_residual=sol.primal_residual,
                  stationarity_residual=sol.stationarity_residual)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (EstimationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
