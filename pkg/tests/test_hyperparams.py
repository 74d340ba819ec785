import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convreg.estimators import Dataset, fit_b, fit_c
from convreg.hyperparams import (PAPER_LAMBDAS, EstimationError, PartitionSpec, cross_validate_lambda,
                                 default_r, estimate_s_partition, estimate_s_replication,
                                 fold_assignment, gaussian_subgaussian_constant, lambda_schedule,
                                 select_u_from_c, theoretical_s)
from convreg.max_affine import Box
from convreg.queue_sim import generate_dataset


def two_cell_data():
    return Dataset([[0.1], [0.2], [0.7], [0.9]], [0.0, 2.0, 1.0, 3.0], Box(0, 1, 1))


def test_partition_two_cells():
    assert estimate_s_partition(two_cell_data(), PartitionSpec(2)) == pytest.approx(2.0)


def test_partition_single_cell_is_sample_variance():
    data = two_cell_data()
    assert estimate_s_partition(data, PartitionSpec(1)) == pytest.approx(np.var(data.y, ddof=1))


def test_partition_skips_singleton_cells():
    data = Dataset([[0.1], [0.2], [0.9]], [0.0, 2.0, 50.0], Box(0, 1, 1))
    assert estimate_s_partition(data, PartitionSpec(2)) == pytest.approx(2.0)


def test_partition_explicit_weights():
    data = two_cell_data()
    assert estimate_s_partition(data, PartitionSpec(2, [0.25, 0.75])) == pytest.approx(2.0)
    data = Dataset([[0.1], [0.2], [0.7], [0.9]], [0.0, 2.0, 0.0, 4.0], Box(0, 1, 1))
    assert estimate_s_partition(data, PartitionSpec(2, [0.25, 0.75])) == pytest.approx(0.25 * 2 + 0.75 * 8)


def test_partition_impossible():
    data = Dataset([[0.1], [0.9]], [0.0, 1.0], Box(0, 1, 1))
    with pytest.raises(EstimationError):
        estimate_s_partition(data, PartitionSpec(2))


def test_partition_spec_validation():
    with pytest.raises(ValueError):
        PartitionSpec(0)
    with pytest.raises(ValueError):
        PartitionSpec(2, [0.5, 0.6])
    with pytest.raises(ValueError):
        PartitionSpec(2, "weighted")


def test_partition_two_dimensional_cells():
    X = [[0.1, 0.1], [0.2, 0.2], [0.8, 0.1], [0.9, 0.2]]
    data = Dataset(X, [0.0, 2.0, 1.0, 3.0], Box(0, 1, 2))
    assert estimate_s_partition(data, PartitionSpec(2)) == pytest.approx(2.0)


def test_partition_mm1_feasible_for_c():
    data = generate_dataset(400, 5000, seed=1)
    s = estimate_s_partition(data, PartitionSpec(default_r(400)))
    res = fit_c(data, s)
    assert res.sse <= s + 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_partition_invariant_to_reordering(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (20, 1))
    y = rng.normal(size=20)
    perm = rng.permutation(20)
    a = estimate_s_partition(Dataset(X, y, Box(0, 1, 1)), PartitionSpec(3))
    b = estimate_s_partition(Dataset(X[perm], y[perm], Box(0, 1, 1)), PartitionSpec(3))
    assert a == pytest.approx(b, rel=1e-12)


def test_replication_examples():
    groups = [(0.0, [0.0, math.sqrt(2)]), (1.0, [0.0, math.sqrt(6)])]
    assert estimate_s_replication(groups) == pytest.approx(2.0)
    assert estimate_s_replication(groups[:1], density=lambda x: 7.0) == pytest.approx(1.0)
    tau = lambda x: 1.0 + x
    doubled = lambda x: 2.0 * tau(x)
    assert estimate_s_replication(groups, tau) == pytest.approx(estimate_s_replication(groups, doubled))
    with pytest.raises(EstimationError):
        estimate_s_replication([(0.0, [1.0])])


def test_theoretical_s_examples():
    assert theoretical_s(1.0, 0.0, 10) == 1.0
    assert theoretical_s(0.5, 1.0, 100) == pytest.approx(0.5 + 0.1 * math.sqrt(math.log(100)), rel=1e-14)
    vals = [theoretical_s(1.0, 2.0, n) for n in range(3, 200)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 1.0


def test_subgaussian_constant_is_optimal():
    # K^2 + K^2 ((1 - 2 sigma2 / K^2)^-1/2 - 1) minimized numerically over K^2
    sigma2 = 0.7
    k2 = np.linspace(2 * sigma2 * 1.0001, 20 * sigma2, 200_001)
    total = k2 + k2 * ((1 - 2 * sigma2 / k2) ** -0.5 - 1)
    assert gaussian_subgaussian_constant(sigma2) == pytest.approx(total.min(), rel=1e-6)


def test_select_u_examples():
    x = np.arange(5.0)
    data = Dataset(x[:, None], 2 * x, Box(0, 4, 1))
    assert select_u_from_c(data, 0.0) == pytest.approx(2.0, abs=1e-3)
    assert select_u_from_c(data, 100.0) == pytest.approx(0.0, abs=1e-9)


def test_select_u_duality_on_mm1():
    data = generate_dataset(120, 5000, seed=3)
    s = estimate_s_partition(data, PartitionSpec(default_r(120)))
    u = select_u_from_c(data, s)
    c = fit_c(data, s)
    b = fit_b(data, u)
    assert b.sse <= s + 1e-6
    assert np.allclose(b.fitted, c.fitted, atol=1e-3 * (1 + np.abs(c.fitted).max()))


def test_fold_assignment_sizes():
    ids = fold_assignment(12, 5, seed=0)
    assert sorted(np.bincount(ids)) == [2, 2, 2, 3, 3]
    counts = np.bincount(ids)
    assert counts.sum() == 12 and counts.max() - counts.min() <= 1
    assert np.array_equal(ids, fold_assignment(12, 5, seed=0))
    with pytest.raises(ValueError):
        fold_assignment(3, 5, seed=0)


def _convex_data(seed, n=20, noise=0.0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-1, 1, n))
    return Dataset(x[:, None], x ** 2 + noise * rng.normal(size=n), Box(-1, 1, 1))


def test_cv_single_and_duplicate_candidates():
    data = _convex_data(0)
    assert cross_validate_lambda(data, [0.3])[0] == 0.3
    lam, curve = cross_validate_lambda(data, [1e-2, 1e-2, 1e6])
    assert lam == 1e-2 and curve[0] == curve[1]


def test_cv_noiseless_prefers_small_penalty():
    data = _convex_data(1)
    _, curve = cross_validate_lambda(data, [0.0, 1e6])
    assert curve[0] <= curve[1]


def test_cv_deterministic_and_nonnegative():
    data = _convex_data(2, noise=0.1)
    a = cross_validate_lambda(data, PAPER_LAMBDAS, seed=4)
    b = cross_validate_lambda(data, PAPER_LAMBDAS, seed=4)
    assert a == b
    assert all(v >= 0 for v in a[1])
    assert len(a[1]) == len(PAPER_LAMBDAS)


def test_cv_curve_matches_manual_fold_loop():
    from convreg.estimators import fit_a
    from convreg.max_affine import evaluate
    data = _convex_data(3, n=10, noise=0.2)
    _, curve = cross_validate_lambda(data, [0.01], folds=5, seed=9)
    ids = fold_assignment(10, 5, 9)
    total = 0.0
    for k in range(5):
        m = fit_a(data.subset(np.flatnonzero(ids != k)), 0.01).model
        held = ids == k
        total += np.sum((data.y[held] - evaluate(m, data.X[held])) ** 2)
    assert curve[0] == pytest.approx(total / 5, rel=1e-12)


def test_lambda_schedule():
    assert lambda_schedule(1) == 1.0
    assert lambda_schedule(1024) == pytest.approx(2.0 ** -8, rel=1e-14)
    vals = [lambda_schedule(n) for n in range(1, 100)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_default_r():
    assert [default_r(n) for n in (120, 300, 400)] == [8, 10, 16]
    assert default_r(1000) == 40
    assert default_r(10) == 2
    assert default_r(4) == 2
