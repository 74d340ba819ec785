"""Slow, independent reference solvers used to freeze expected values.

Nothing here touches convreg's solver path.
"""

import itertools

import numpy as np


def qp_dual_projected_gradient(Q, c, A, b, max_iter=400_000, stall=1e-15):
    """Solve ``min 0.5 z'Qz + c'z  s.t.  Az <= b`` for positive definite Q.

    Accelerated projected gradient on the dual ``min_{y >= 0} 0.5 (c + A'y)' Q^-1 (c + A'y) + b'y``;
    the primal point is recovered as ``z = -Q^-1 (c + A'y)``.  Runs until the
    dual iterate stops moving.
    """
    Q = np.asarray(Q, float)
    A = np.asarray(A, float)
    Qinv = np.linalg.inv(Q)
    H = A @ Qinv @ A.T
    L = max(np.linalg.eigvalsh(H).max(), 1e-12)
    y = np.zeros(len(b))
    w = y.copy()
    t = 1.0
    for _ in range(max_iter):
        grad = H @ w + A @ (Qinv @ c) + b
        y_new = np.maximum(0.0, w - grad / L)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        w = y_new + (t - 1) / t_new * (y_new - y)
        if np.abs(y_new - y).max() <= stall * (1 + np.abs(y).max()):
            y = y_new
            break
        y, t = y_new, t_new
    z = -Qinv @ (c + A.T @ y)
    return z, 0.5 * z @ Q @ z + c @ z


def box_projected_gradient(Q, c, lo, hi, max_iter=2_000_000, stall=1e-14):
    """Projected gradient for ``min 0.5 z'Qz + c'z`` over the box ``lo <= z <= hi`` (Q only PSD)."""
    Q = np.asarray(Q, float)
    L = max(np.linalg.eigvalsh(Q).max(), 1e-12)
    z = np.clip(np.zeros(len(c)), lo, hi)
    for _ in range(max_iter):
        z_new = np.clip(z - (Q @ z + c) / L, lo, hi)
        if np.abs(z_new - z).max() <= stall:
            z = z_new
            break
        z = z_new
    return z, 0.5 * z @ Q @ z + c @ z


def convex_lse_1d(x, y):
    """Least-squares convex fit values at sorted-or-not 1-D points, by active-set enumeration.

    Convexity of the values is ``secant slopes nondecreasing``; every subset
    of those constraints is tried as an equality set and the best feasible
    projection wins.  Exponential in n, meant for n <= 6.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    n = len(xs)
    G = []
    for k in range(n - 2):
        h0, h1 = xs[k + 1] - xs[k], xs[k + 2] - xs[k + 1]
        row = np.zeros(n)
        # (f1-f0)/h0 - (f2-f1)/h1 <= 0
        row[k] += -1 / h0
        row[k + 1] += 1 / h0 + 1 / h1
        row[k + 2] += -1 / h1
        G.append(row)
    G = np.array(G).reshape(-1, n)
    best, best_val = None, np.inf
    for r in range(len(G) + 1):
        for S in itertools.combinations(range(len(G)), r):
            if S:
                Gs = G[list(S)]
                f = ys - Gs.T @ np.linalg.solve(Gs @ Gs.T, Gs @ ys)
            else:
                f = ys.copy()
            if len(G) and (G @ f).max() > 1e-10:
                continue
            val = np.sum((ys - f) ** 2)
            if val < best_val - 1e-15:
                best, best_val = f, val
    out = np.empty(n)
    out[order] = best
    return out


def min_slope_interpolant_1d(x, y, grid):
    """Smallest M on ``grid`` admitting a convex interpolant of (x, y) with all |slopes| <= M.

    In 1-D a convex interpolant exists iff the secant slopes are nondecreasing,
    and the slope at x_i can be anything between the largest secant to its
    left and the smallest secant to its right; the bound M is feasible iff
    every such interval meets [-M, M].  Returns None if no grid value works.
    """
    order = np.argsort(x)
    xs, ys = np.asarray(x, float)[order], np.asarray(y, float)[order]
    sec = np.diff(ys) / np.diff(xs)
    if np.any(np.diff(sec) < -1e-12):
        return None
    n = len(xs)
    lo = np.array([-np.inf] + list(sec))
    hi = np.array(list(sec) + [np.inf])
    for M in grid:
        if all(max(lo[i], -M) <= min(hi[i], M) + 1e-12 for i in range(n)):
            return M
    return None
