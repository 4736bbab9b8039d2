import numpy as np
import pytest

from proxyrecon.dataset import TimeSeries, gen_synthetic_world
from proxyrecon.errors import DataError
from proxyrecon.harness import (BlockScheme, HoldoutResult, compare, enumerate_blocks,
                                outperformance_pvalue, pseudo_envelope, run_block_cv)
from proxyrecon.modelzoo import ModelSpec
from proxyrecon.nullmodels import PseudoProxyClass


def test_block_enumeration():
    assert len(enumerate_blocks(149, 30)) == 120
    assert enumerate_blocks(5, 5) == [(0, 5)]
    assert enumerate_blocks(4, 2) == [(0, 2), (1, 3), (2, 4)]
    with pytest.raises(DataError):
        enumerate_blocks(10, 11)
    with pytest.raises(DataError):
        BlockScheme(block_len=20, scoring="middle_20")
    assert BlockScheme(scoring="middle20").scored(10, 40) == (15, 35)
    with pytest.raises(DataError):
        BlockScheme(block_len=40, total_years=30)


def test_intercept_holdout_matches_manual_oracle():
    y = TimeSeries(1850, np.random.default_rng(0).normal(size=50))
    res = run_block_cv(ModelSpec("InterceptOnly"), y, scheme=BlockScheme(10))
    v = y.values
    oracle = []
    for s in range(41):
        mu = np.r_[v[:s], v[s + 10:]].mean()
        oracle.append(np.sqrt(np.mean((v[s:s + 10] - mu) ** 2)))
    np.testing.assert_allclose(res.rmse, oracle, atol=1e-12)
    assert res.block_starts[0] == 1850 and res.block_starts[-1] == 1890
    mid = run_block_cv(ModelSpec("InterceptOnly"), y, scheme=BlockScheme(30, "middle_20"))
    mu = v[30:].mean()
    assert mid.rmse[0] == pytest.approx(np.sqrt(np.mean((v[5:25] - mu) ** 2)))


def test_compare_counts_ties_apart():
    s = np.arange(4)
    a = HoldoutResult(None, s, np.array([1.0, 2.0, 3.0, np.nan]), 0)
    b = HoldoutResult(None, s, np.array([2.0, 2.0, 1.0, 1.0]), 0)
    c = compare(a, b)
    assert (c.wins, c.ties, c.losses, c.total) == (1, 1, 1, 3)


def test_cv_determinism_and_workers():
    y, X = gen_synthetic_world(50, 6, 0.5, seed=1)
    spec = ModelSpec("LassoOnProxies", cv_reps=2, grid_size=15)
    a = run_block_cv(spec, y, X, scheme=BlockScheme(25), seed=4)
    b = run_block_cv(spec, y, X, scheme=BlockScheme(25), seed=4, workers=2)
    assert np.array_equal(a.rmse, b.rmse)
    assert a.summary()["blocks"] == 26


def test_failed_blocks_are_recorded():
    y, X = gen_synthetic_world(40, 3, 0.5, seed=1)
    res = run_block_cv(ModelSpec("PCRegression", k=5), y, X, scheme=BlockScheme(30))
    assert np.all(np.isnan(res.rmse)) and len(res.errors) == 11


def test_envelope_and_pvalue():
    y, X = gen_synthetic_world(40, 4, 0.5, seed=2)
    spec = ModelSpec("PCRegression", k=2)
    env = pseudo_envelope(spec, PseudoProxyClass.white(), y, BlockScheme(30), n_series=4,
                          reps=20, seed=1)
    assert env.draws.shape == (11, 20)
    assert np.all(env.lo <= env.mean) and np.all(env.mean <= env.hi)
    p, d = outperformance_pvalue(0.5, spec, PseudoProxyClass.white(), y, 0, n_series=4,
                                 reps=50, seed=3, return_draws=True)
    assert p == np.mean(d < 0.5)
    assert outperformance_pvalue(0.0, spec, PseudoProxyClass.white(), y, (0, 30),
                                 n_series=4, reps=10) == 0.0
    with pytest.raises(DataError):
        outperformance_pvalue(np.nan, spec, PseudoProxyClass.white(), y, 0, n_series=4)
    with pytest.raises(DataError):
        pseudo_envelope(spec, PseudoProxyClass.white(), y, reps=5)


def test_missing_response_rejected():
    v = np.ones(40)
    v[3] = np.nan
    with pytest.raises(DataError):
        run_block_cv(ModelSpec("InterceptOnly"), TimeSeries(0, v))
