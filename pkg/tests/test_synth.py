import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lumedbn.model import DbnStructure, RegressionParams, TimeSeriesDataset
from lumedbn.synth import (GeneratorConfig, GroundTruth, generate_random_dbn, inject_mcar,
                           make_dataset, simulate_series)


def test_defaults_respect_fan_in_and_coefficient_range(rng):
    cfg = GeneratorConfig()
    for _ in range(200):
        truth = generate_random_dbn(cfg, rng)
        w = truth.params.weights[truth.adjacency]
        assert truth.structure.max_fan_in() <= 5
        assert np.all((w >= 0.2) & (w <= 0.8))
        assert np.all(truth.params.intercept == 0) and np.all(truth.params.sigma2 == 1)
        assert np.all(truth.params.weights[~truth.adjacency] == 0)


def test_zero_fan_in_gives_empty_graph(rng):
    truth = generate_random_dbn(GeneratorConfig(fan_in_max=0), rng)
    assert not truth.adjacency.any()


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 12), fan=st.integers(0, 6))
def test_parents_precede_children_in_order(seed, k, fan):
    truth = generate_random_dbn(GeneratorConfig(k=k, fan_in_max=fan), np.random.default_rng(seed))
    rank = np.empty(k, int)
    rank[truth.order] = np.arange(k)
    for j, ps in enumerate(truth.structure.parent_sets):
        assert len(ps) <= min(fan, rank[j])
        assert all(rank[p] < rank[j] for p in ps)
    assert truth.structure.parent_sets[truth.order[0]] == ()


def test_parent_set_sizes_cover_full_range(rng):
    sizes = np.zeros(6, int)
    for _ in range(2000):
        truth = generate_random_dbn(GeneratorConfig(), rng)
        for ps in truth.structure.parent_sets:
            sizes[len(ps)] += 1
    assert np.all(sizes > 0)


def _truth(adj, weights, sigma2):
    k = len(sigma2)
    return GroundTruth(DbnStructure.from_adjacency(adj),
                       RegressionParams(np.zeros(k), weights, sigma2, np.ones(k)), np.arange(k))


def test_empty_graph_is_white_noise(rng):
    truth = _truth(np.zeros((2, 2), bool), np.zeros((2, 2)), np.ones(2))
    d = simulate_series(truth, 1, 10_000, rng)
    assert d.mask.all()
    for i in range(2):
        assert 0.95 <= d.values[0, i].var(ddof=1) <= 1.05


def test_single_arc_lag_covariance(rng):
    adj = np.array([[False, True], [False, False]])
    w = np.where(adj, 0.5, 0.0)
    d = simulate_series(_truth(adj, w, np.ones(2)), 1, 10_000, rng)
    x1, x2 = d.values[0]
    prod = (x1[:-1] - x1[:-1].mean()) * (x2[1:] - x2[1:].mean())
    se = prod.std(ddof=1) / np.sqrt(len(prod))
    assert abs(prod.mean() - 0.5 * x1.var()) < 3 * se


def test_noiseless_recursion(rng):
    adj = np.array([[True, True], [False, False]])
    w = np.array([[0.9, 0.5], [0.0, 0.0]])
    d = simulate_series(_truth(adj, w, np.zeros(2)), 1, 5, rng)
    x = d.values[0]
    for t in range(1, 6):
        np.testing.assert_allclose(x[:, t], x[:, t - 1] @ w)


def test_mcar_edge_rates(rng):
    d = TimeSeriesDataset(rng.normal(size=(2, 3, 4)), np.ones((2, 3, 4), bool))
    assert inject_mcar(d, 0.0, rng).mask.all()
    out = inject_mcar(d, 1.0, rng)
    assert not out.mask.any()
    np.testing.assert_array_equal(out.values, d.values)
    with pytest.raises(ValueError):
        inject_mcar(d, 1.5, rng)


def test_mcar_count_in_binomial_interval():
    d = TimeSeriesDataset(np.zeros((10, 10, 11)), np.ones((10, 10, 11), bool))
    lo, hi = stats.binom.interval(0.99, 1100, 0.3)
    missing = (~inject_mcar(d, 0.3, np.random.default_rng(0)).mask).sum()
    assert lo <= missing <= hi


def test_make_dataset_streams():
    cfg = GeneratorConfig(k=5, T=20, seed=3)
    t1, c1, i1 = make_dataset(cfg, 0.2, 1)
    t2, c2, i2 = make_dataset(cfg, 0.2, 1)
    np.testing.assert_array_equal(c1.values, c2.values)
    np.testing.assert_array_equal(i1.mask, i2.mask)
    # the same DBN and series under a different missingness rate
    t3, c3, i3 = make_dataset(cfg, 0.4, 1)
    np.testing.assert_array_equal(t1.adjacency, t3.adjacency)
    np.testing.assert_array_equal(c1.values, c3.values)
    assert not np.array_equal(i1.mask, i3.mask)
    # a different replicate is a different DBN
    t4, _, _ = make_dataset(cfg, 0.2, 2)
    assert not np.array_equal(t1.params.weights, t4.params.weights)
    assert make_dataset(cfg, 0.0, 1, T=7)[1].T == 7
