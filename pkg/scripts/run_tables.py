"""Replicated M/M/1 benchmark: value and subgradient MAE tables for A1, A2, B, C.

    python3 scripts/run_tables.py --reps 100 --out results/full
"""

import argparse
import os
from pathlib import Path

from convreg.experiments import CONFIGS, box_stats, raw_csv, report_json, run_experiment, table_csv


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-list", default="120,300,400")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--customers", type=int, default=5000)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default="results/full")
    args = p.parse_args()

    n_list = [int(t) for t in args.n_list.split(",")]
    exp = run_experiment(n_list, args.reps, args.customers, args.seed, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(exp) + "\n")
    (out / "table_value_mae.csv").write_text(table_csv(exp, "value"))
    (out / "table_grad_mae.csv").write_text(table_csv(exp, "grad"))
    (out / "raw_mae.csv").write_text(raw_csv(exp))

    print("value MAE\n" + table_csv(exp, "value"))
    print("subgradient MAE\n" + table_csv(exp, "grad"))
    for run in exp["runs"]:
        outl = {c: len(box_stats(run["configs"][c]["grad_mae"]).outliers) for c in CONFIGS}
        print(f"n={run['n']}: completed {run['completed']}/{run['reps']}, "
              f"lambda=0 chosen {run['lambda_zero_selected']}x, grad-MAE outliers {outl}")


if __name__ == "__main__":
    main()
