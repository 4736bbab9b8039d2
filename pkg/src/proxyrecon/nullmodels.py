"""Null benchmarks: ARMA baselines, pseudo-proxy generators and the
random-walk spurious correlation experiment."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import _kernels
from ._rng import substream
from .dataset import ProxyMatrix, TimeSeries
from .errors import DataError, NumericalError

log = logging.getLogger(__name__)

__all__ = [
    "fit_ar1",
    "PseudoProxyClass",
    "gen_pseudo",
    "pseudo_array",
    "ArmaModel",
    "fit_arma",
    "arma_select",
    "arma_forecast",
    "spurious_corr_experiment",
]


def _values(s):
    if isinstance(s, TimeSeries):
        return s.complete()
    v = np.asarray(s, dtype=float).ravel()
    if not np.all(np.isfinite(v)):
        raise DataError("series has missing values")
    return v


def fit_ar1(s) -> float:
    """Lag-one sample autocorrelation of the demeaned series, clamped to +-0.999."""
    x = _values(s)
    if x.size < 3:
        raise DataError("need at least 3 observations")
    x = x - x.mean()
    den = x @ x
    if den == 0:
        raise DataError("zero-variance series")
    return float(np.clip((x[:-1] @ x[1:]) / den, -0.999, 0.999))


# ---------------------------------------------------------------------------
# Pseudo-proxies

_KINDS = ("white", "ar1", "empirical", "brownian")


@dataclass(frozen=True, eq=False)
class PseudoProxyClass:
    kind: str
    phi: float = 0.0
    phi_list: np.ndarray = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DataError(f"unknown pseudo-proxy kind {self.kind!r}")
        if self.kind == "ar1" and not 0.0 <= self.phi < 1.0:
            raise DataError("AR1 phi must lie in [0, 1)")
        if self.kind == "empirical":
            if self.phi_list is None:
                raise DataError("empirical AR1 needs phi_list")
            pl = np.asarray(self.phi_list, float).ravel()
            if np.any(np.abs(pl) >= 1.0):
                raise DataError("empirical phi values must lie in (-1, 1)")
            object.__setattr__(self, "phi_list", pl)

    @classmethod
    def white(cls):
        return cls("white")

    @classmethod
    def ar1(cls, phi):
        return cls("ar1", float(phi))

    @classmethod
    def empirical(cls, phi_list):
        return cls("empirical", phi_list=phi_list)

    @classmethod
    def brownian(cls):
        return cls("brownian")

    @classmethod
    def from_proxies(cls, X: ProxyMatrix, window=None):
        """Empirical AR1 class with one fitted coefficient per proxy column."""
        Xw = X.window(window) if window is not None else X
        return cls.empirical([fit_ar1(Xw.column(n)) for n in Xw.names])

    @classmethod
    def parse(cls, text, phi_list=None):
        """``white``, ``ar1_0.25``, ``empirical``, ``brownian``."""
        t = text.strip().lower()
        if t in ("white", "brownian"):
            return cls(t)
        if t.startswith("ar1_"):
            return cls.ar1(float(t[4:]))
        if t == "empirical":
            return cls.empirical(phi_list)
        raise DataError(f"unknown null class {text!r}")

    @property
    def label(self):
        if self.kind == "ar1":
            return f"ar1_{self.phi:g}"
        return self.kind


def pseudo_array(cls: PseudoProxyClass, n_years, n_series, rng):
    """Raw pseudo-proxy draws as an (n_years x n_series) array, standardized.

    The generators only ever see the RNG: no temperature data enters them.
    """
    if n_years < 2:
        raise DataError("n_years must be >= 2")
    if n_series < 1:
        raise DataError("n_series must be >= 1")
    eps = rng.standard_normal((n_years, n_series))
    if cls.kind == "white":
        X = eps
    elif cls.kind == "brownian":
        X = np.cumsum(eps, axis=0)
    else:
        if cls.kind == "ar1":
            phi = np.full(n_series, cls.phi)
        else:
            phi = cls.phi_list
            if phi.size != n_series:
                raise DataError(f"phi_list has {phi.size} entries for {n_series} series")
        X = np.empty_like(eps)
        X[0] = eps[0] / np.sqrt(1.0 - phi ** 2)
        for t in range(1, n_years):
            X[t] = phi * X[t - 1] + eps[t]
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    return (X - mu) / sd


def gen_pseudo(cls: PseudoProxyClass, n_years, n_series, seed, start_year=0) -> ProxyMatrix:
    """Pseudo-proxy matrix, each column standardized over its full span."""
    X = pseudo_array(cls, n_years, n_series, substream(seed))
    names = tuple(f"pseudo_{j:04d}" for j in range(n_series))
    return ProxyMatrix(start_year, names, X)


def spurious_corr_experiment(n=149, reps=1000, seed=0, kind="brownian"):
    """Pearson correlations of ``reps`` independent pairs of series of length ``n``."""
    if n < 3:
        raise DataError("n must be >= 3")
    rng = substream(seed)
    out = np.empty(reps)
    for i in range(reps):
        e = rng.standard_normal((n, 2))
        a = np.cumsum(e, axis=0) if kind == "brownian" else e
        out[i] = np.corrcoef(a[:, 0], a[:, 1])[0, 1]
    return out


# ---------------------------------------------------------------------------
# ARMA

@dataclass(frozen=True, eq=False)
class ArmaModel:
    p: int
    q: int
    ar: np.ndarray
    ma: np.ndarray
    mean: float
    sigma2: float
    loglik: float
    aic: float
    nobs: int = 0
    converged: bool = True

    @property
    def order(self):
        return (self.p, self.q)


def _pacf_from_acov(acov, k):
    """Sample partial autocorrelations via Durbin-Levinson."""
    out = np.zeros(k)
    phi = np.zeros(0)
    v = acov[0]
    for m in range(k):
        num = acov[m + 1] - (phi @ acov[m:0:-1] if m else 0.0)
        r = num / v if v > 0 else 0.0
        r = float(np.clip(r, -0.95, 0.95))
        phi = np.concatenate([phi - r * phi[::-1], [r]])
        v *= 1 - r * r
        out[m] = r
    return out


def _roots_ok(poly_tail, sign):
    """Roots of 1 + sign*sum c_j z^j lie outside the unit circle (to 1e-6)."""
    if poly_tail.size == 0 or not np.any(poly_tail):
        return True
    coefs = np.concatenate([[1.0], sign * poly_tail])
    roots = np.roots(coefs[::-1])
    return bool(np.all(np.abs(roots) > 1.0 + 1e-6))


def _loglik_at(y, mean, ar, ma):
    """Exact Gaussian log-likelihood with sigma^2 profiled out; returns (ll, sigma2)."""
    ssq, sld, _ = _kernels.kalman(y, float(mean), np.asarray(ar, float), np.asarray(ma, float))
    n = y.size
    s2 = ssq / n
    return float(-0.5 * n * (np.log(2 * np.pi) + 1 + np.log(s2)) - 0.5 * sld), float(s2)


def arma_loglik(s, mean, ar=(), ma=(), sigma2=None):
    """Exact Gaussian log-likelihood at given parameters.

    With ``sigma2=None`` the innovation variance is set to its profile maximum.
    """
    y = _values(s)
    ar = np.asarray(ar, float)
    ma = np.asarray(ma, float)
    ssq, sld, _ = _kernels.kalman(y, float(mean), ar, ma)
    n = y.size
    if sigma2 is None:
        sigma2 = ssq / n
    return float(-0.5 * n * np.log(2 * np.pi * sigma2) - 0.5 * sld - 0.5 * ssq / sigma2)


_BOUND = 6.0  # |tanh(6)| keeps roots at least ~1e-5 outside the unit circle
MAX_ITER = 200  # per start; flat likelihoods of over-specified orders can crawl


def fit_arma(s, p, q) -> ArmaModel:
    """Exact maximum likelihood ARMA(p, q) with mean.

    AR and MA coefficients are optimized through partial autocorrelations
    (tanh-transformed), which keeps every candidate stationary and
    invertible. Three fixed starting points; the best optimum wins.
    """
    y = _values(s)
    n = y.size
    if not (0 <= p <= 5 and 0 <= q <= 5):
        raise DataError("orders must lie in 0..5")
    if n <= p + q + 2:
        raise DataError(f"series of length {n} too short for ARMA({p},{q})")
    ybar = float(y.mean())
    if p == 0 and q == 0:
        s2 = float(np.mean((y - ybar) ** 2))
        if s2 <= 0:
            raise NumericalError("zero-variance series")
        ll = -0.5 * n * (np.log(2 * np.pi * s2) + 1.0)
        return ArmaModel(0, 0, np.zeros(0), np.zeros(0), ybar, s2, ll, -2 * ll + 4, n)

    ysd = float(y.std()) or 1.0
    acov = np.array([np.mean((y[: n - k] - ybar) * (y[k:] - ybar)) for k in range(p + 1)])
    yw = np.arctanh(_pacf_from_acov(acov, p)) if p else np.zeros(0)
    starts = [
        np.zeros(1 + p + q),
        np.concatenate([[0.0], yw, np.zeros(q)]),
        np.concatenate([[0.0], yw, np.full(q, np.arctanh(0.3))]),
    ]
    bounds = [(-10.0, 10.0)] + [(-_BOUND, _BOUND)] * (p + q)
    best = None
    for x0 in starts:
        try:
            res = optimize.minimize(_kernels.arma_negloglik, x0, args=(y, p, q, ybar, ysd),
                                    method="L-BFGS-B", bounds=bounds,
                                    options=dict(maxiter=MAX_ITER))
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            log.debug("ARMA(%d,%d) start failed: %s", p, q, exc)
            continue
        if np.isfinite(res.fun) and res.fun < 1e299 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise NumericalError(f"ARMA({p},{q}) optimizer failed from every start")

    x = best.x
    mean = ybar + ysd * x[0]
    ar = _kernels.pacf_to_coef(np.tanh(x[1:1 + p]))
    ma = -_kernels.pacf_to_coef(np.tanh(x[1 + p:]))
    if not _roots_ok(ar, -1.0):
        raise NumericalError(f"ARMA({p},{q}) fit is non-stationary at the boundary")
    if not _roots_ok(ma, 1.0):
        raise NumericalError(f"ARMA({p},{q}) fit is non-invertible at the boundary")
    ll, s2 = _loglik_at(y, mean, ar, ma)
    return ArmaModel(p, q, ar, ma, float(mean), s2, ll, -2 * ll + 2 * (p + q + 2), n,
                     bool(best.success))


def arma_select(s, p_max=5, q_max=5) -> ArmaModel:
    """Minimum-AIC model over all orders 0..p_max x 0..q_max; failed fits are skipped."""
    best = None
    for p in range(p_max + 1):
        for q in range(q_max + 1):
            try:
                m = fit_arma(s, p, q)
            except (NumericalError, DataError) as exc:
                log.info("skipping ARMA(%d,%d): %s", p, q, exc)
                continue
            if best is None or m.aic < best.aic:
                best = m
    if best is None:
        raise NumericalError("every ARMA fit failed")
    return best


def arma_forecast(m: ArmaModel, history, h) -> np.ndarray:
    """Mean forecasts for the ``h`` steps after ``history`` (Kalman filter state)."""
    if h < 1:
        raise DataError("h must be >= 1")
    y = _values(history)
    _, _, a = _kernels.kalman(y, float(m.mean), np.asarray(m.ar, float), np.asarray(m.ma, float))
    T, _ = _kernels._system(np.asarray(m.ar, float), np.asarray(m.ma, float))
    out = np.empty(h)
    for k in range(h):
        out[k] = m.mean + a[0]
        a = T @ a
    return out
