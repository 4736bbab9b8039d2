import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from proxyrecon.dataset import TimeSeries
from proxyrecon.errors import DataError, RankError, SingularDesignError
from proxyrecon.numerics import (diff_diagnostics, loess_matrix, loess_smooth, ols_fit,
                                 principal_components, rmse)


def test_pca_trivial_example():
    b = principal_components(np.array([[1.0, 0.0], [-1.0, 0.0]]), 1)
    np.testing.assert_allclose(b.loadings[:, 0], [1, 0])
    np.testing.assert_allclose(b.scores[:, 0], [1, -1])


def test_pca_matches_covariance_eigensolve():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(12, 5))
    X -= X.mean(axis=0)
    b = principal_components(X, 5)
    w, V = np.linalg.eigh(np.cov(X, rowvar=False))
    order = np.argsort(w)[::-1]
    oracle = X @ V[:, order]
    for j in range(5):
        s = np.sign(oracle[:, j] @ b.scores[:, j])
        np.testing.assert_allclose(b.scores[:, j], s * oracle[:, j], atol=1e-6)
    np.testing.assert_allclose(b.explained_variance, w[order], atol=1e-10)


def test_pca_invariants():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 6)) @ rng.normal(size=(6, 6))
    b = principal_components(X, 6, center=True)
    Xc = X - X.mean(axis=0)
    np.testing.assert_allclose(b.loadings.T @ b.loadings, np.eye(6), atol=1e-8)
    G = b.scores.T @ b.scores
    assert np.abs(G - np.diag(np.diag(G))).max() < 1e-6
    assert np.all(np.diff(b.explained_variance) <= 1e-12)
    np.testing.assert_allclose(b.explained_variance.sum(), Xc.var(axis=0, ddof=1).sum(), atol=1e-8)
    np.testing.assert_allclose(b.scores @ b.loadings.T, Xc, atol=1e-8)
    idx = np.argmax(np.abs(b.loadings), axis=0)
    assert np.all(b.loadings[idx, range(6)] > 0)


def test_pca_errors():
    X = np.ones((4, 3))
    X[:, 0] = [1, -1, 1, -1]
    X[:, 1:] = 0
    with pytest.raises(RankError) as ei:
        principal_components(X, 2)
    assert ei.value.rank == 1
    with pytest.raises(RankError):
        principal_components(np.zeros((3, 2)) + [[1, -1]], 3)
    with pytest.raises(DataError, match="centered"):
        principal_components(np.ones((4, 2)) + np.arange(4)[:, None], 1)


def test_ols_examples():
    x = np.arange(5.0)
    f = ols_fit(x, 2 * x + 1)
    assert f.intercept == pytest.approx(1) and f.coefficients[0] == pytest.approx(2)
    assert f.sse == pytest.approx(0, abs=1e-20)
    f0 = ols_fit(None, np.array([1.0, 2.0, 6.0]))
    assert f0.intercept == pytest.approx(3.0)
    np.testing.assert_allclose(f0.predict(np.zeros((2, 0))), [3, 3])
    with pytest.raises(SingularDesignError):
        ols_fit(np.column_stack([x, 2 * x]), x)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_ols_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    D = np.column_stack([np.ones(30), X])
    beta = np.linalg.solve(D.T @ D, D.T @ y)
    f = ols_fit(X, y)
    np.testing.assert_allclose(np.r_[f.intercept, f.coefficients], beta, atol=1e-8)
    assert abs(f.residuals.sum()) < 1e-8


def test_pc_regression_projection_equivalence():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 5))
    y = rng.normal(size=40)
    b = principal_components(X, 5, center=True)
    a = ols_fit(b.scores, y)
    c = ols_fit(X, y)
    np.testing.assert_allclose(a.predict(b.scores), c.predict(X), atol=1e-6)


def _loess_oracle(v, span):
    n = v.size
    x = np.arange(n, dtype=float)
    q = int(np.ceil(span * n))
    out = np.empty(n)
    for i in range(n):
        d = np.abs(x - i)
        h = np.sort(d)[q - 1]
        w = np.clip(1 - (d / h) ** 3, 0, None) ** 3
        w[d >= h] = 0
        A = np.column_stack([np.ones(n), x - i, (x - i) ** 2])
        W = np.diag(w)
        coef = np.linalg.solve(A.T @ W @ A, A.T @ W @ v)
        out[i] = coef[0]
    return out


def test_loess_matches_direct_wls():
    rng = np.random.default_rng(4)
    t = np.arange(149)
    v = np.sin(t / 10) + 0.3 * rng.standard_normal(149)
    np.testing.assert_allclose(loess_smooth(v, 0.33), _loess_oracle(v, 0.33), atol=1e-8)


def test_loess_reproduces_lines_and_constants():
    v = 0.5 * np.arange(60) - 3
    np.testing.assert_allclose(loess_smooth(v), v, atol=1e-8)
    np.testing.assert_allclose(loess_smooth(np.full(30, 2.5)), 2.5, atol=1e-10)
    s = TimeSeries(1900, v)
    out = loess_smooth(s)
    assert isinstance(out, TimeSeries) and out.start_year == 1900


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000), st.floats(-100, 100))
def test_loess_commutes_with_constant(seed, c):
    v = np.random.default_rng(seed).normal(size=50)
    np.testing.assert_allclose(loess_smooth(v + c), loess_smooth(v) + c, atol=1e-10)


def test_loess_rows_and_errors():
    rng = np.random.default_rng(5)
    M = rng.normal(size=(3, 40))
    np.testing.assert_allclose(loess_smooth(M)[1], loess_smooth(M[1]))
    with pytest.raises(DataError):
        loess_smooth(np.arange(5.0), 0.2)
    with pytest.raises(DataError):
        loess_matrix(10, 0.0)


def test_rmse_examples():
    a = np.array([1.0, 2.0, 4.0])
    assert rmse(a, a) == 0
    assert rmse(a + 1, a) == pytest.approx(1)
    assert rmse(np.full(3, a.mean()), a) == pytest.approx(a.std())
    with pytest.raises(DataError):
        rmse(a, a[:2])


def test_diff_diagnostics_examples():
    rng = np.random.default_rng(6)
    a = np.cumsum(rng.normal(size=30))
    d = diff_diagnostics(a, a)
    assert d.corr == pytest.approx(1) and d.sign_agree == d.n_signs == 29
    d = diff_diagnostics(-a, a)
    assert d.corr == pytest.approx(-1) and d.sign_agree == 0
    assert d.descriptive_only


def test_sign_test_21_of_29():
    # build differences with 21 of 29 signs agreeing
    da = np.ones(29)
    dp = np.r_[np.ones(21), -np.ones(8)] * np.linspace(1, 2, 29)
    a = np.r_[0, np.cumsum(da * np.linspace(1, 3, 29))]
    p = np.r_[0, np.cumsum(dp)]
    d = diff_diagnostics(p, a)
    assert (d.sign_agree, d.n_signs) == (21, 29)
    assert d.sign_pvalue == pytest.approx(0.026, abs=0.003)


def test_diff_diagnostics_errors():
    with pytest.raises(DataError):
        diff_diagnostics(np.arange(2.0), np.arange(2.0))
    with pytest.raises(DataError):
        diff_diagnostics(np.ones(5), np.arange(5.0))
