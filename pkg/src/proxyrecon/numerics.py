"""Shared numerical kernels: OLS, principal components, loess, RMSE and
first-difference diagnostics."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import ceil

import numpy as np
from scipy import stats

from .dataset import TimeSeries
from .errors import DataError, RankError, SingularDesignError

__all__ = [
    "PCBasis",
    "LinearFit",
    "DiffDiagnostics",
    "principal_components",
    "ols_fit",
    "loess_smooth",
    "loess_matrix",
    "rmse",
    "diff_diagnostics",
]


@dataclass(frozen=True, eq=False)
class PCBasis:
    loadings: np.ndarray  # p x k, orthonormal columns
    scores: np.ndarray  # n x k
    explained_variance: np.ndarray  # length k, descending
    center: np.ndarray  # column means removed before the rotation

    @property
    def k(self):
        return self.loadings.shape[1]

    def project(self, X):
        """Scores of new rows under the same centering and rotation."""
        return (np.asarray(X, float) - self.center) @ self.loadings

    def truncate(self, k):
        if k > self.k:
            raise RankError(f"basis holds {self.k} components, asked for {k}", rank=self.k)
        return PCBasis(self.loadings[:, :k], self.scores[:, :k],
                       self.explained_variance[:k], self.center)


def principal_components(X, k, center=False) -> PCBasis:
    """Leading ``k`` principal components of ``X`` via SVD.

    ``X`` must already be column-centered unless ``center=True``. Each loading
    column is signed so that its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("X must be a 2-d matrix")
    if not np.all(np.isfinite(X)):
        raise DataError("X contains missing or non-finite cells")
    n, p = X.shape
    if k < 1 or k > min(n, p):
        raise RankError(f"k={k} exceeds min(rows, cols)={min(n, p)}", rank=min(n, p))
    mu = X.mean(axis=0)
    if center:
        X = X - mu
    else:
        scale = max(1.0, float(np.abs(X).max()))
        if np.abs(mu).max() > 1e-8 * scale:
            raise DataError("X columns must be centered (pass center=True to center here)")
        mu = np.zeros(p)
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    tol = max(n, p) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if rank < k:
        raise RankError(f"matrix rank {rank} is below requested k={k}", rank=rank)
    V = vt[:k].T.copy()
    flip = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(k)])
    V *= flip
    ev = s[:k] ** 2 / max(n - 1, 1)
    return PCBasis(V, X @ V, ev, mu)


@dataclass(frozen=True, eq=False)
class LinearFit:
    intercept: float
    coefficients: np.ndarray
    residuals: np.ndarray
    sse: float
    names: tuple = ()
    has_intercept: bool = True

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if self.coefficients.size == 0:
            n = X.shape[0] if X.ndim == 2 else int(X.size) if X.ndim else 1
            return np.full(n, self.intercept)
        return self.intercept + X @ self.coefficients

    @property
    def coef_dict(self):
        names = self.names or tuple(f"x{j}" for j in range(self.coefficients.size))
        return dict(zip(names, self.coefficients))


def ols_fit(X, y, intercept=True, names=()) -> LinearFit:
    """Least squares fit; refuses singular designs rather than pseudo-inverting."""
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    X = np.empty((n, 0)) if X is None else np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise DataError(f"X has {X.shape[0]} rows but y has {n}")
    cols = X.shape[1] + int(intercept)
    if cols == 0:
        return LinearFit(0.0, np.zeros(0), y.copy(), float(y @ y), tuple(names), False)
    if n <= cols:
        raise SingularDesignError(f"{n} rows cannot identify {cols} coefficients")
    D = np.column_stack([np.ones(n), X]) if intercept else X
    beta, _, rank, sv = np.linalg.lstsq(D, y, rcond=None)
    if rank < cols or sv[-1] <= max(D.shape) * np.finfo(float).eps * sv[0]:
        raise SingularDesignError(f"design has rank {rank} < {cols} columns")
    r = y - D @ beta
    b0, b = (beta[0], beta[1:]) if intercept else (0.0, beta)
    return LinearFit(float(b0), b, r, float(r @ r), tuple(names), intercept)


@lru_cache(maxsize=32)
def _loess_matrix_cached(n, span, degree):
    x = np.arange(n, dtype=float)
    q = int(ceil(span * n))
    if q < degree + 1:
        raise DataError(f"loess window of {q} points is too small for degree {degree}")
    q = min(q, n)
    L = np.zeros((n, n))
    for i in range(n):
        d = np.abs(x - x[i])
        h = np.partition(d, q - 1)[q - 1]
        u = d / h if h > 0 else np.full(n, np.inf)
        w = np.where(u < 1.0, (1.0 - u ** 3) ** 3, 0.0)
        active = np.flatnonzero(w > 0)
        if active.size < degree + 1:
            raise DataError(f"loess window of {q} points is too small for degree {degree}")
        B = np.vander((x[active] - x[i]) / max(h, 1.0), degree + 1, increasing=True)
        Bw = B * w[active, None]
        a = np.linalg.solve(B.T @ Bw, np.eye(degree + 1)[0])
        L[i, active] = Bw @ a
    L.setflags(write=False)
    return L


def loess_matrix(n, span=0.33, degree=2):
    """Linear smoother matrix of loess on ``n`` equally spaced points."""
    if not 0.0 < span <= 1.0:
        raise DataError("span must lie in (0, 1]")
    return _loess_matrix_cached(int(n), float(span), int(degree))


def loess_smooth(s, span=0.33, degree=2):
    """Local quadratic loess with tricube weights, no robustness iterations.

    Each year is fitted from its ``ceil(span * n)`` nearest years. Accepts a
    TimeSeries (returns one) or a 1-d array, or a 2-d array of series in rows.
    """
    if isinstance(s, TimeSeries):
        v = s.complete()
        return TimeSeries(s.start_year, loess_matrix(v.size, span, degree) @ v, name=s.name)
    v = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DataError("loess input has missing values")
    L = loess_matrix(v.shape[-1], span, degree)
    return v @ L.T


def rmse(pred, actual):
    pred = np.asarray(pred, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if pred.size != actual.size:
        raise DataError(f"length mismatch: {pred.size} vs {actual.size}")
    if pred.size == 0:
        raise DataError("rmse of empty vectors")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


@dataclass(frozen=True)
class DiffDiagnostics:
    corr: float
    corr_pvalue: float
    sign_agree: int
    n_signs: int
    sign_pvalue: float
    # classical references ignore autocorrelation; treat p-values as descriptive
    descriptive_only: bool = True


def diff_diagnostics(pred, actual) -> DiffDiagnostics:
    """Correlation and sign agreement of first differences.

    The correlation p-value uses the usual t reference; the sign p-value is an
    exact two-sided binomial(n, 1/2) test with tied signs left out of n.
    """
    if isinstance(pred, TimeSeries) and isinstance(actual, TimeSeries):
        if pred.start_year != actual.start_year or len(pred) != len(actual):
            raise DataError("series spans differ")
    p = pred.complete() if isinstance(pred, TimeSeries) else np.asarray(pred, float)
    a = actual.complete() if isinstance(actual, TimeSeries) else np.asarray(actual, float)
    if p.size != a.size:
        raise DataError("series lengths differ")
    if p.size < 3:
        raise DataError("need at least 3 years")
    dp, da = np.diff(p), np.diff(a)
    if np.ptp(dp) == 0 or np.ptp(da) == 0:
        raise DataError("zero-variance differences")
    r, pr = stats.pearsonr(dp, da)
    sp, sa = np.sign(dp), np.sign(da)
    keep = (sp != 0) & (sa != 0)
    n = int(keep.sum())
    agree = int(np.sum(sp[keep] == sa[keep]))
    pb = stats.binomtest(agree, n, 0.5).pvalue if n else 1.0
    return DiffDiagnostics(float(r), float(pr), agree, n, float(pb))
