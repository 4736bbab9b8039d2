import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import optimize

from proxyrecon.errors import ConvergenceError, DataError
from proxyrecon.lasso import lambda_max, lasso_cv, lasso_cv_fit, lasso_fit, lasso_path


def _kkt(X, y, fit):
    Xc = X - X.mean(axis=0)
    r = (y - y.mean()) - Xc @ fit.coefficients
    g = 2 * Xc.T @ r
    lam = fit.lam
    nz = fit.coefficients != 0
    a = np.abs(g[nz] - lam * np.sign(fit.coefficients[nz]))
    b = np.clip(np.abs(g[~nz]) - lam, 0, None)
    return max(a.max(initial=0), b.max(initial=0)) / max(lam, 1.0)


def test_soft_threshold_orthonormal_oracle():
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.normal(size=(40, 4)))
    Q -= Q.mean(axis=0)
    Q, _ = np.linalg.qr(Q)  # centered orthonormal columns
    y = rng.normal(size=40)
    y -= y.mean()
    lam = 0.6
    z = Q.T @ y
    oracle = np.sign(z) * np.clip(np.abs(z) - lam / 2, 0, None)
    fit = lasso_fit(Q, y, lam)
    np.testing.assert_allclose(fit.coefficients, oracle, atol=1e-7)


def test_zero_at_lambda_max_and_ols_at_zero():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 4))
    y = X @ [1.0, -2.0, 0.0, 0.5] + rng.normal(size=30)
    lm = lambda_max(X, y)
    assert np.all(lasso_fit(X, y, lm).coefficients == 0)
    assert np.any(lasso_fit(X, y, 0.99 * lm).coefficients != 0)
    D = np.column_stack([np.ones(30), X])
    ols = np.linalg.lstsq(D, y, rcond=None)[0]
    f = lasso_fit(X, y, 0.0)
    np.testing.assert_allclose(np.r_[f.intercept, f.coefficients], ols, atol=1e-6)


def test_matches_split_variable_qp_oracle():
    # oracle: beta = u - v with u, v >= 0, smooth problem solved by L-BFGS-B
    rng = np.random.default_rng(2)
    X = rng.normal(size=(25, 6))
    y = X[:, 0] - X[:, 3] + 0.5 * rng.normal(size=25)
    Xc, yc = X - X.mean(axis=0), y - y.mean()
    lam = 5.0

    def f(w):
        b = w[:6] - w[6:]
        r = yc - Xc @ b
        g = -2 * Xc.T @ r
        return r @ r + lam * w.sum(), np.r_[g + lam, -g + lam]

    res = optimize.minimize(f, np.zeros(12), jac=True, method="L-BFGS-B",
                            bounds=[(0, None)] * 12, options=dict(ftol=1e-15, gtol=1e-12))
    fit = lasso_fit(X, y, lam)
    np.testing.assert_allclose(fit.coefficients, res.x[:6] - res.x[6:], atol=1e-5)
    assert fit.objective == pytest.approx(res.fun, rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.9))
def test_kkt_and_monotone_objective(seed, frac):
    rng = np.random.default_rng(seed)
    n, p = rng.integers(8, 40), rng.integers(2, 30)
    X = rng.normal(size=(n, p))
    y = rng.normal(size=n)
    lam = frac * lambda_max(X, y)
    try:
        fit = lasso_fit(X, y, lam, trace=True)
    except ConvergenceError as exc:
        # near-interpolating p > n fits can exhaust the sweep budget; that is reported
        assert exc.sweeps == 10_000 and p > n
        assume(False)
    assert _kkt(X, y, fit) < 1e-5
    assert fit.monotone
    assert np.all(np.diff(fit.objective_trace) <= 1e-9 * max(1.0, fit.objective_trace[0]))


def test_path_matches_single_fits_both_kernels():
    rng = np.random.default_rng(3)
    for n, p in [(50, 8), (10, 25)]:
        X = rng.normal(size=(n, p))
        y = X[:, 0] + rng.normal(size=n)
        lm = lambda_max(X, y)
        lams = lm * np.array([0.9, 0.5, 0.2, 0.05])
        b0, B = lasso_path(X, y, lams)
        for i, lam in enumerate(lams):
            f = lasso_fit(X, y, lam)
            np.testing.assert_allclose(B[i], f.coefficients, atol=1e-4)
            assert b0[i] == pytest.approx(f.intercept, abs=1e-4)


def test_cv_deterministic_and_ties_to_larger_lambda():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(40, 5))
    y = 2 * X[:, 1] + rng.normal(size=40)
    l1, c1 = lasso_cv(X, y, reps=3, grid_size=30, seed=9)
    l2, c2 = lasso_cv(X, y, reps=3, grid_size=30, seed=9, workers=2)
    assert l1 == l2 and np.array_equal(c1.mean_rmse, c2.mean_rmse)
    assert np.all(np.diff(c1.lambdas) < 0)
    assert c1.fold_rmse.shape == (15, 30)
    i = int(np.flatnonzero(c1.lambdas == l1)[0])
    assert np.all(c1.mean_rmse[:i] > c1.mean_rmse[i])
    fit, _ = lasso_cv_fit(X, y, reps=2, grid_size=20, seed=0, names=list("abcde"))
    assert 1 in fit.support and fit.names == tuple("abcde")


def test_cv_loss_matches_manual_fold_oracle():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(20, 3))
    y = X[:, 0] + rng.normal(size=20)
    from proxyrecon._rng import substream
    lam, curve = lasso_cv(X, y, reps=1, folds=4, grid_size=5, seed=3)
    perm = substream(3, 0).permutation(20)
    errs = []
    for part in np.array_split(perm, 4):
        test = np.sort(part)
        train = np.setdiff1d(np.arange(20), test)
        row = []
        for l in curve.lambdas:
            f = lasso_fit(X[train], y[train], l)
            row.append(np.sqrt(np.mean((f.predict(X[test]) - y[test]) ** 2)))
        errs.append(row)
    np.testing.assert_allclose(curve.mean_rmse, np.mean(errs, axis=0), atol=1e-5)


def test_errors():
    X = np.ones((3, 2))
    with pytest.raises(DataError):
        lasso_fit(X, np.ones(3), -1)
    with pytest.raises(DataError):
        lasso_fit(X, np.ones(4), 1)
    X[0, 0] = np.nan
    with pytest.raises(DataError):
        lasso_fit(X, np.ones(3), 1)
    with pytest.raises(DataError):
        lasso_cv(np.random.default_rng(0).normal(size=(4, 2)), np.arange(4.0), folds=5)


def test_nonconvergence_reports_sweeps():
    rng = np.random.default_rng(496)
    n, p = rng.integers(8, 40), rng.integers(2, 30)
    X = rng.normal(size=(n, p))
    y = rng.normal(size=n)
    lam = lambda_max(X, y) / 64
    with pytest.raises(ConvergenceError, match="10000 sweeps") as ei:
        lasso_fit(X, y, lam)
    assert ei.value.sweeps == 10_000
    fit = lasso_fit(X, y, lam, max_sweeps=100_000)
    assert _kkt(X, y, fit) < 1e-5
