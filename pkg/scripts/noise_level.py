"""Noise variance of the simulated mean wait at one service rate, and the
resulting theoretical error bound s_n with how often the true curve meets it.

    python3 scripts/noise_level.py --x 1.25 --reps 200 --n 400
"""

import argparse

import numpy as np

from convreg.hyperparams import gaussian_subgaussian_constant, theoretical_s
from convreg.queue_sim import QueueConfig, generate_dataset, point_rng, simulate_mean_wait, true_f0


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--x", type=float, default=1.25)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--customers", type=int, default=5000)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--datasets", type=int, default=100)
    p.add_argument("--seed", type=int, default=10_000)
    args = p.parse_args()

    waits = np.array([simulate_mean_wait(QueueConfig(args.x, args.customers, args.seed + k),
                                         point_rng(args.seed + k, 0)) for k in range(args.reps)])
    sigma2 = float(np.var(waits, ddof=1))
    c = 8.0 * gaussian_subgaussian_constant(sigma2)
    s = theoretical_s(sigma2, c, args.n)
    print(f"x={args.x} mean={waits.mean():.4f} (f0={true_f0(args.x):.4f}) sigma2={sigma2:.5f}")
    print(f"c={c:.4f} s_n={s:.4f}")

    mse = []
    for k in range(args.datasets):
        data = generate_dataset(args.n, args.customers, seed=50_000 + k)
        mse.append(np.mean((data.y - true_f0(data.X[:, 0])) ** 2))
    mse = np.array(mse)
    print(f"true-curve error over {args.datasets} datasets: median {np.median(mse):.4f}, "
          f"max {mse.max():.4f}, within s_n {int(np.sum(mse <= s))}/{args.datasets}")


if __name__ == "__main__":
    main()
