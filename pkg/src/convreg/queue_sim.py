"""M/M/1 waiting-time simulator used as the regression benchmark.

The regression target is the steady-state expected time in queue of an
M/M/1 FIFO queue with unit arrival rate as a function of the service rate
``x``: ``f0(x) = 1 / (x (x - 1))``.  Observations are finite-horizon sample
means from a queue that starts empty and idle, simulated with the Lindley
recursion.

Randomness: numpy's PCG64 bit generator.  Each design point ``i`` gets its
own stream from ``SeedSequence(seed, spawn_key=(i,))``, so a point's
observation depends only on ``(seed, i)``.  Exponential variates use the
inverse transform ``-log(1 - U) / rate``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .max_affine import Box

GENERATOR = "numpy.random.PCG64"
DOMAIN = (1.2, 1.3)


@dataclass(frozen=True)
class QueueConfig:
    service_rate: float
    num_customers: int = 5000
    seed: int = 0
    arrival_rate: float = 1.0

    def __post_init__(self):
        if not self.arrival_rate > 0:
            raise ValueError("arrival rate must be positive")
        if not self.service_rate > self.arrival_rate:
            raise ValueError("service rate must exceed arrival rate")
        if self.num_customers < 1:
            raise ValueError("need at least one customer")


def true_f0(x):
    """Steady-state mean time in queue, ``1/(x(x-1))``, for unit arrival rate."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 1.0):
        raise ValueError("service rate must exceed 1 for a stable queue")
    out = 1.0 / (x * (x - 1.0))
    return float(out) if out.ndim == 0 else out


def grad_f0(x):
    """Derivative of :func:`true_f0`: ``-(2x - 1) / (x(x-1))^2``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 1.0):
        raise ValueError("service rate must exceed 1 for a stable queue")
    out = -(2.0 * x - 1.0) / (x * (x - 1.0)) ** 2
    return float(out) if out.ndim == 0 else out


def point_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def lindley_waits(service: np.ndarray, interarrival: np.ndarray) -> np.ndarray:
    """Waiting times W_1..W_N of customers starting from an empty, idle queue.

    ``service[k]`` and ``interarrival[k]`` are customer k's service time and
    the gap to customer k+1; the last entries are unused.  Works row-wise on
    2-D input.  Uses the closed form of ``W_{k+1} = max(0, W_k + S_k - A_k)``,
    ``W_k = C_k - min_{j<=k} C_j`` with ``C`` the partial sums of ``S - A``
    and ``C_1 = 0``.
    """
    service = np.atleast_2d(service)
    interarrival = np.atleast_2d(interarrival)
    steps = service[:, :-1] - interarrival[:, :-1]
    walk = np.concatenate([np.zeros((steps.shape[0], 1)), np.cumsum(steps, axis=1)], axis=1)
    return walk - np.minimum.accumulate(walk, axis=1)


def simulate_mean_wait(config: QueueConfig, rng: np.random.Generator | None = None) -> float:
    """Average time in queue of the first ``num_customers`` customers."""
    if rng is None:
        rng = point_rng(config.seed, 0)
    u = rng.random((2, config.num_customers))
    service = -np.log1p(-u[0]) / config.service_rate
    inter = -np.log1p(-u[1]) / config.arrival_rate
    return float(lindley_waits(service, inter).mean())


def mean_waits_common(rates, num_customers: int, seed: int) -> np.ndarray:
    """Mean waits at several service rates driven by the same uniforms.

    Service times at rate x are ``E / x`` for a shared unit-exponential
    ``E``; used for common-random-numbers comparisons across rates.
    """
    rng = point_rng(seed, 0)
    u = rng.random((2, num_customers))
    unit = -np.log1p(-u[0])
    inter = -np.log1p(-u[1])
    rates = np.asarray(rates, dtype=float)
    waits = lindley_waits(unit[None, :] / rates[:, None], np.broadcast_to(inter, (rates.size, num_customers)))
    return waits.mean(axis=1)


def design_points(n: int, a: float = DOMAIN[0], b: float = DOMAIN[1]) -> np.ndarray:
    """Cell midpoints ``a + (b-a)(i-1)/n + (b-a)/(2n)``, i = 1..n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(1, n + 1)
    return a + (b - a) * (i - 1) / n + (b - a) / (2 * n)


def generate_dataset(n: int, customers: int = 5000, seed: int = 0):
    """M/M/1 benchmark data: y_i is the simulated mean wait at design point X_i."""
    from .estimators import Dataset

    x = design_points(n)
    y = np.array([
        simulate_mean_wait(QueueConfig(float(xi), customers, seed), point_rng(seed, i))
        for i, xi in enumerate(x, start=1)
    ])
    meta = {"seed": seed, "customers": customers, "generator": GENERATOR, "n": n,
            "domain": {"a": DOMAIN[0], "b": DOMAIN[1], "d": 1}}
    return Dataset(x[:, None], y, Box(DOMAIN[0], DOMAIN[1], 1), meta=meta)
