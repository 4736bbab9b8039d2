"""Lasso with an unpenalized intercept, fitted by coordinate descent.

The objective is the plain sum of squared errors plus ``lam * sum|b_j|``
(no 1/n or 1/2 factors), so every lambda reported here is in those units.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import substream
from .errors import ConvergenceError, DataError

log = logging.getLogger(__name__)

TOL = 1e-7
MAX_SWEEPS = 10_000
KKT_TOL = 1e-6  # internal; the public guarantee is 1e-5
PATH_SWEEPS = 2_000  # per grid point inside CV paths


@dataclass(frozen=True, eq=False)
class LassoFit:
    intercept: float
    coefficients: np.ndarray
    lam: float
    objective: float
    sweeps: int = 0
    objective_trace: np.ndarray = None
    monotone: bool = True
    names: tuple = ()

    @property
    def support(self):
        return np.flatnonzero(self.coefficients)

    def predict(self, X):
        return self.intercept + np.asarray(X, float) @ self.coefficients


@dataclass(frozen=True, eq=False)
class CVCurve:
    lambdas: np.ndarray  # decreasing
    mean_rmse: np.ndarray
    se_rmse: np.ndarray
    fold_rmse: np.ndarray  # (reps*folds) x grid

    def as_rows(self):
        return [dict(lam=float(l), mean_rmse=float(m), se=float(s))
                for l, m, s in zip(self.lambdas, self.mean_rmse, self.se_rmse)]


def _prep(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[1] == 0:
        raise DataError("X must be a non-empty 2-d matrix")
    if X.shape[0] != y.size:
        raise DataError(f"X has {X.shape[0]} rows but y has {y.size}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("lasso inputs contain missing or non-finite values")
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = np.asfortranarray(X - xm)
    return Xc, y - ym, xm, ym


def lambda_max(X, y):
    """Smallest lambda at which every penalized coefficient is zero."""
    Xc, yc, _, _ = _prep(X, y)
    return float(2.0 * np.max(np.abs(Xc.T @ yc)))


def lasso_fit(X, y, lam, names=(), warm_start=None, trace=False, tol=TOL,
              max_sweeps=MAX_SWEEPS) -> LassoFit:
    """Solve the lasso at a single ``lam`` (>= 0)."""
    if lam < 0:
        raise DataError("lambda must be non-negative")
    Xc, yc, xm, ym = _prep(X, y)
    colsq = np.einsum("ij,ij->j", Xc, Xc)
    beta = np.zeros(Xc.shape[1]) if warm_start is None else np.array(warm_start, float)
    tr = np.zeros(min(max_sweeps, 100_000) if trace else 0)
    sweeps, ok, mono = _kernels.lasso_cd(Xc, yc, float(lam), beta, colsq, tol, max_sweeps,
                                         KKT_TOL, tr)
    if not ok:
        raise ConvergenceError(f"lasso did not converge in {sweeps} sweeps (lambda={lam:g})",
                               sweeps=sweeps)
    r = yc - Xc @ beta
    obj = float(r @ r + lam * np.abs(beta).sum())
    b0 = float(ym - xm @ beta)
    return LassoFit(b0, beta, float(lam), obj, int(sweeps),
                    tr[:sweeps] if trace else None, bool(mono), tuple(names))


def lambda_grid(lmax, grid_size=100, ratio=1e-4):
    if lmax <= 0:
        return np.zeros(1)
    return lmax * np.geomspace(1.0, ratio, grid_size)


def lasso_path(X, y, lambdas):
    """Intercepts and coefficient matrix (len(lambdas) x p) along a grid.

    Used for tuning only: once the fit saturates or a grid point stalls, the
    remaining rows repeat the last solution instead of raising. Tall problems
    (more rows than columns) run on the Gram matrix.
    """
    Xc, yc, xm, ym = _prep(X, y)
    lambdas = np.asarray(lambdas, float)
    n, p = Xc.shape
    if n > p:
        G = np.ascontiguousarray(Xc.T @ Xc)
        B, solved = _kernels.lasso_path_gram(G, Xc.T @ yc, float(yc @ yc), lambdas, TOL,
                                             PATH_SWEEPS, KKT_TOL)
    else:
        colsq = np.einsum("ij,ij->j", Xc, Xc)
        B, solved = _kernels.lasso_path(Xc, yc, lambdas, colsq, TOL, PATH_SWEEPS, KKT_TOL)
    if solved < lambdas.size:
        log.debug("lasso path stopped after %d of %d grid points", solved, lambdas.size)
    return ym - B @ xm, B


def _fold_errors(X, y, lambdas, train, test):
    b0, B = lasso_path(X[train], y[train], lambdas)
    pred = b0[:, None] + B @ X[test].T
    return np.sqrt(np.mean((pred - y[test]) ** 2, axis=1))


def lasso_cv(X, y, reps=10, folds=5, grid_size=100, seed=0, workers=1):
    """Pick lambda by repeated K-fold cross-validation on held-out RMSE.

    The grid runs geometrically from ``lambda_max`` down to ``lambda_max*1e-4``.
    Fold membership comes from a permutation drawn from ``substream(seed, rep)``,
    so the result does not depend on ``workers``. The loss is the mean of the
    per-fold RMSEs; ties go to the larger lambda.
    Returns ``(lambda_hat, CVCurve)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if folds < 2 or n < folds:
        raise DataError(f"need at least {folds} rows for {folds}-fold CV, have {n}")
    if n - int(np.ceil(n / folds)) < 2:
        raise DataError("degenerate folds: training part has fewer than 2 rows")
    lambdas = lambda_grid(lambda_max(X, y), grid_size)

    jobs = []
    for rep in range(reps):
        perm = substream(seed, rep).permutation(n)
        for part in np.array_split(perm, folds):
            test = np.sort(part)
            train = np.setdiff1d(np.arange(n), test)
            jobs.append((train, test))

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            errs = list(ex.map(lambda j: _fold_errors(X, y, lambdas, *j), jobs))
    else:
        errs = [_fold_errors(X, y, lambdas, *j) for j in jobs]
    E = np.vstack(errs)
    mean = E.mean(axis=0)
    se = E.std(axis=0, ddof=1) / np.sqrt(E.shape[0]) if E.shape[0] > 1 else np.zeros_like(mean)
    # grid is decreasing, so the first minimizer is the largest lambda
    best = int(np.flatnonzero(mean == mean.min())[0])
    return float(lambdas[best]), CVCurve(lambdas, mean, se, E)


def lasso_cv_fit(X, y, reps=10, folds=5, grid_size=100, seed=0, names=(), workers=1):
    """Tune by CV, then refit on all rows at the chosen lambda."""
    lam, curve = lasso_cv(X, y, reps, folds, grid_size, seed, workers)
    return lasso_fit(X, y, lam, names=names), curve
