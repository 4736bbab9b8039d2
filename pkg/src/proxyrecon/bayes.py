"""Bayesian AR(2) + principal-component regression for backcasting.

The model for year t is

    y_t = b0 + sum_i b_i pc_i(t) + b_lag1 y_{t+1} + b_lag2 y_{t+2} + e_t,   e_t ~ N(0, s^2)

with b ~ N(0, V I) and s ~ Uniform(0, U). Lags point forward in time so the
model can run backwards from the most recent observations.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from ._rng import derive_seed, substream
from .dataset import AnalysisWindow, ProxyMatrix, TimeSeries
from .errors import DataError, NumericalError, SingularDesignError
from .numerics import loess_matrix, ols_fit, principal_components, rmse

log = logging.getLogger(__name__)

__all__ = [
    "BayesConfig",
    "PosteriorDraws",
    "PathEnsemble",
    "pc_scores",
    "build_design",
    "beta_conditional",
    "gibbs_core",
    "gibbs_sample",
    "split_rhat",
    "effective_sample_size",
    "backcast_mean",
    "backcast_paths",
    "credible_bands",
    "event_probabilities",
    "holdout_validate",
]

MODES = ("residual_only", "parameter_only", "full")


@dataclass(frozen=True)
class BayesConfig:
    n_pcs: int = 10
    ar_order: int = 2
    prior_beta_var: float = 1000.0
    sigma_upper: float = 100.0
    iters: int = 5000
    burnin: int = 1000
    thin: int = 2
    chains: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.ar_order != 2:
            raise DataError("only two autoregressive lags are supported")
        if self.prior_beta_var <= 0 or self.sigma_upper <= 0:
            raise DataError("prior_beta_var and sigma_upper must be positive")
        if self.iters <= self.burnin:
            raise DataError("iters must exceed burnin")
        if self.thin < 1 or self.chains < 1 or self.n_pcs < 0:
            raise DataError("thin and chains must be >= 1, n_pcs >= 0")

    @property
    def retained_per_chain(self):
        return len(range(self.burnin, self.iters, self.thin))


@dataclass(frozen=True, eq=False)
class PosteriorDraws:
    beta: np.ndarray  # draws x (1 + n_pcs + 2)
    sigma: np.ndarray
    chain: np.ndarray  # chain id per draw
    names: tuple
    rhat: np.ndarray = None  # per parameter, sigma last
    ess: np.ndarray = None
    direction: str = "backward"

    @property
    def n_draws(self):
        return self.sigma.size

    @property
    def beta_mean(self):
        return self.beta.mean(axis=0)

    @property
    def flagged(self):
        """True when some split-chain R-hat exceeds 1.1."""
        return self.rhat is not None and bool(np.nanmax(self.rhat) > 1.1)

    def diagnostics(self):
        names = list(self.names) + ["sigma"]
        return {n: dict(rhat=float(r), ess=float(e))
                for n, r, e in zip(names, self.rhat, self.ess)}


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    mode: str
    start_year: int
    paths: np.ndarray  # draws x years, ascending years

    @property
    def years(self):
        return np.arange(self.start_year, self.start_year + self.paths.shape[1])

    @property
    def n_paths(self):
        return self.paths.shape[0]


# ---------------------------------------------------------------------------
# design

def pc_scores(X: ProxyMatrix, k=10) -> ProxyMatrix:
    """Scores of the leading ``k`` PCs of the full-span proxy matrix."""
    if X.missing.any():
        raise DataError("proxy matrix must be complete over its span")
    b = principal_components(X.data, k, center=True)
    return ProxyMatrix(X.start_year, tuple(f"pc{i + 1}" for i in range(k)), b.scores)


def _param_names(k):
    return ("b0",) + tuple(f"pc{i + 1}" for i in range(k)) + ("lag1", "lag2")


def build_design(pcs: ProxyMatrix, y: TimeSeries, years, direction="backward"):
    """Design matrix and response for the given training years.

    ``backward`` uses y_{t+1}, y_{t+2} as lags; ``forward`` uses y_{t-1}, y_{t-2}.
    """
    years = np.asarray(years, int)
    sgn = 1 if direction == "backward" else -1
    if direction not in ("backward", "forward"):
        raise DataError(f"unknown direction {direction!r}")
    D = np.column_stack([np.ones(years.size), pcs.rows(years),
                         y.at(years + sgn), y.at(years + 2 * sgn)])
    return D, y.at(years)


# ---------------------------------------------------------------------------
# sampler

def beta_conditional(D, y, sigma, prior_var):
    """Mean and covariance of beta given sigma (normal prior, normal likelihood)."""
    D = np.asarray(D, float)
    A = D.T @ D / sigma ** 2 + np.eye(D.shape[1]) / prior_var
    try:
        c = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularDesignError("beta conditional precision is not positive definite") from exc
    mean = linalg.cho_solve(c, D.T @ np.asarray(y, float) / sigma ** 2)
    cov = linalg.cho_solve(c, np.eye(D.shape[1]))
    return mean, cov


def _draw_sigma(rng, sse, n, upper):
    """sigma from IG((n-1)/2, sse/2) on sigma^2, truncated to sigma < upper."""
    shape = 0.5 * (n - 1)
    rate = 0.5 * sse
    for _ in range(100):
        s2 = rate / rng.gamma(shape)
        if s2 < upper * upper:
            return np.sqrt(s2)
    # bound far in the tail: sample tau = 1/sigma^2 from its gamma truncated to tau > b
    b = 1.0 / upper ** 2
    sf = stats.gamma.sf(b, shape, scale=1.0 / rate)
    if sf > 1e-300:
        tau = stats.gamma.isf(sf * (1.0 - rng.random()), shape, scale=1.0 / rate)
    else:
        # sf underflows; the truncated density is locally exponential just above b
        tau = b + rng.exponential(1.0 / max(rate - (shape - 1.0) / b, rate * 1e-3))
    tau = max(tau, b)
    return min(1.0 / np.sqrt(tau), upper * (1 - 1e-12))


def gibbs_core(D, y, rng, iters, burnin=0, thin=1, prior_var=1000.0, sigma_upper=100.0,
               sigma_fixed=None, init_sigma=None):
    """One Gibbs chain on a fixed design; returns (beta draws, sigma draws)."""
    D = np.asarray(D, float)
    y = np.asarray(y, float)
    n, p = D.shape
    if n < 2:
        raise DataError("need at least two observations")
    DtD = D.T @ D
    Dty = D.T @ y
    eye = np.eye(p) / prior_var
    if sigma_fixed is not None:
        sigma = float(sigma_fixed)
    elif init_sigma is not None:
        sigma = float(init_sigma)
    else:
        sigma = min(float(np.std(y)) or 1.0, 0.5 * sigma_upper)
    keep = range(burnin, iters, thin)
    B = np.empty((len(keep), p))
    S = np.empty(len(keep))
    k = 0
    for it in range(iters):
        A = DtD / sigma ** 2 + eye
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError("beta conditional precision lost definiteness") from exc
        m = linalg.cho_solve((L, True), Dty / sigma ** 2)
        beta = m + linalg.solve_triangular(L, rng.standard_normal(p), lower=True, trans="T")
        if not np.all(np.isfinite(beta)):
            raise NumericalError("non-finite beta draw")
        if sigma_fixed is None:
            r = y - D @ beta
            sigma = _draw_sigma(rng, float(r @ r), n, sigma_upper)
        if it >= burnin and (it - burnin) % thin == 0:
            B[k] = beta
            S[k] = sigma
            k += 1
    return B, S


def split_rhat(x):
    """Split-chain potential scale reduction; ``x`` is chains x draws."""
    x = np.asarray(x, float)
    half = x.shape[1] // 2
    if half < 2:
        return np.nan
    s = np.vstack([x[:, :half], x[:, half:2 * half]])
    m, n = s.shape
    W = s.var(axis=1, ddof=1).mean()
    B = n * s.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0
    return float(np.sqrt(((n - 1) / n * W + B / n) / W))


def effective_sample_size(x):
    """ESS over chains (x: chains x draws), Geyer initial positive sequence."""
    x = np.asarray(x, float)
    m, n = x.shape
    if n < 4:
        return float(m * n)
    xc = x - x.mean(axis=1, keepdims=True)
    f = np.fft.rfft(xc, 2 * n, axis=1)
    acov = np.fft.irfft(f * np.conj(f), axis=1)[:, :n] / n
    var_w = acov[:, 0].mean() * n / (n - 1)
    if var_w == 0:
        return float(m * n)
    var_plus = var_w * (n - 1) / n + (x.mean(axis=1).var(ddof=1) if m > 1 else 0.0)
    rho = 1.0 - (var_w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        tau += 2 * pair
    return float(m * n / max(tau, 1e-12))


def _pool(fn, items, workers):
    from .harness import _pool_map
    return _pool_map(fn, items, workers)


def gibbs_sample(pcs: ProxyMatrix, y: TimeSeries, cfg: BayesConfig = BayesConfig(),
                 train_years=None, direction="backward", workers=1) -> PosteriorDraws:
    """Posterior draws for the lagged PC regression.

    Chain ``c`` uses ``substream(cfg.seed, c)``; chains are independent jobs.
    """
    if pcs.n_cols < cfg.n_pcs:
        raise DataError(f"need {cfg.n_pcs} PC columns, have {pcs.n_cols}")
    pcs = pcs.select(pcs.names[:cfg.n_pcs])
    if train_years is None:
        train_years = _default_train_years(pcs, y, direction)
    D, yv = build_design(pcs, y, train_years, direction)
    ols = ols_fit(D[:, 1:], yv)
    init = max(np.sqrt(ols.sse / max(yv.size - D.shape[1], 1)), 1e-8)

    def chain(c):
        return gibbs_core(D, yv, substream(cfg.seed, c), cfg.iters, cfg.burnin, cfg.thin,
                          cfg.prior_beta_var, cfg.sigma_upper, init_sigma=init)

    res = _pool(chain, list(range(cfg.chains)), workers)
    B = np.vstack([r[0] for r in res])
    S = np.concatenate([r[1] for r in res])
    ids = np.repeat(np.arange(cfg.chains), res[0][1].size)
    allp = np.column_stack([B, S])
    per = allp.reshape(cfg.chains, -1, allp.shape[1])
    rhat = np.array([split_rhat(per[:, :, j]) for j in range(allp.shape[1])])
    ess = np.array([effective_sample_size(per[:, :, j]) for j in range(allp.shape[1])])
    draws = PosteriorDraws(B, S, ids, _param_names(cfg.n_pcs), rhat, ess, direction)
    if draws.flagged:
        log.warning("Gibbs diagnostics: max split R-hat %.3f exceeds 1.1", np.nanmax(rhat))
    return draws


def _default_train_years(pcs, y, direction):
    lo = max(pcs.start_year, y.start_year)
    hi = min(pcs.end_year, y.end_year)
    if direction == "backward":
        hi = min(hi, y.end_year - 2)
    else:
        lo = max(lo, y.start_year + 2)
    yrs = np.arange(lo, hi + 1)
    yrs = yrs[~y.missing[yrs - y.start_year]]
    if yrs.size < 3:
        raise DataError("too few training years")
    return yrs


# ---------------------------------------------------------------------------
# recursion

def _recurse(lin, b1, b2, a1, a2, noise=None):
    """Run y_t = lin_t + b1*y_prev1 + b2*y_prev2 (+ noise_t) step by step.

    Arrays are (draws x steps) in the order of recursion; ``a1`` is the value
    one step ahead of the first step, ``a2`` two steps ahead.
    """
    d, T = lin.shape
    out = np.empty((d, T))
    p1 = np.broadcast_to(np.asarray(a1, float), (d,)).copy()
    p2 = np.broadcast_to(np.asarray(a2, float), (d,)).copy()
    for t in range(T):
        v = lin[:, t] + b1 * p1 + b2 * p2
        if noise is not None:
            v = v + noise[:, t]
        out[:, t] = v
        p2, p1 = p1, v
    return out


def _lin(beta, X):
    beta = np.atleast_2d(beta)
    k = X.shape[1]
    return beta[:, :1] + beta[:, 1:k + 1] @ X.T, beta[:, k + 1], beta[:, k + 2]


def _prep_years(draws, pcs, years):
    k = len(draws.names) - 3
    pcs = pcs.select(pcs.names[:k])
    years = pcs.years if years is None else np.asarray(
        years.years if isinstance(years, AnalysisWindow) else years, int)
    if np.any(np.diff(years) != 1):
        raise DataError("backcast years must be consecutive")
    return pcs, years


def _run(beta, X, anchors, direction, noise=None):
    """Recursion over X rows (ascending years) in the model's direction."""
    lin, b1, b2 = _lin(beta, X)
    a1, a2 = anchors
    if direction == "backward":
        # first step is the last year; anchors are the two years after it
        out = _recurse(lin[:, ::-1], b1, b2, a1, a2,
                       None if noise is None else noise[:, ::-1])
        return out[:, ::-1]
    # forward: anchors are (y_{start-1}, y_{start-2})
    return _recurse(lin, b1, b2, a1, a2, noise)


def backcast_mean(draws: PosteriorDraws, pcs: ProxyMatrix, anchors, years=None) -> TimeSeries:
    """Plug-in recursion with the posterior mean of beta.

    For the backward model ``anchors = (y[last+1], y[last+2])``; for the
    forward model ``anchors = (y[first-1], y[first-2])``.
    """
    pcs, years = _prep_years(draws, pcs, years)
    out = _run(draws.beta_mean, pcs.rows(years), anchors, draws.direction)[0]
    return TimeSeries(int(years[0]), out, name="backcast")


def backcast_paths(draws: PosteriorDraws, pcs: ProxyMatrix, anchors, mode="full",
                   years=None, seed=0, max_paths=None) -> PathEnsemble:
    """One simulated path per retained draw.

    ``residual_only`` keeps beta at its posterior mean and adds N(0, sigma_d^2)
    noise each year; ``parameter_only`` uses each draw's beta without noise;
    ``full`` uses each draw's beta and sigma with noise. Noise feeds through
    the lags into every earlier year.
    """
    if mode not in MODES:
        raise DataError(f"mode must be one of {MODES}")
    pcs, years = _prep_years(draws, pcs, years)
    X = pcs.rows(years)
    d = draws.n_draws if max_paths is None else min(max_paths, draws.n_draws)
    idx = np.arange(d)
    beta = np.broadcast_to(draws.beta_mean, (d, draws.beta.shape[1])) \
        if mode == "residual_only" else draws.beta[idx]
    noise = None
    if mode != "parameter_only":
        noise = substream(seed).standard_normal((d, years.size)) * draws.sigma[idx, None]
    paths = _run(beta, X, anchors, draws.direction, noise)
    if not np.all(np.isfinite(paths)):
        raise NumericalError("backcast paths diverged")
    return PathEnsemble(mode, int(years[0]), paths)


def credible_bands(e: PathEnsemble, level=0.95):
    """Per-year central quantile band of the path ensemble; returns (lo, hi)."""
    if e.n_paths < 100:
        raise DataError(f"credible bands need at least 100 paths, have {e.n_paths}")
    if not 0 < level <= 1:
        raise DataError("level must lie in (0, 1]")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(e.paths, [tail, 1.0 - tail], axis=0)
    return lo, hi


# ---------------------------------------------------------------------------
# events

@dataclass(frozen=True)
class EventSpec:
    """Observed statistics compared against the pre-instrumental part of each path."""

    year: int = 1998
    decade: tuple = (1997, 2006)
    thirty: tuple = None  # default: last 30 observed years
    pre_end: int = 1849  # last year of the path span compared against
    runups: tuple = (10, 30, 60)
    span: float = 0.33


def _rolling_max_mean(P, w):
    c = np.cumsum(np.pad(P, ((0, 0), (1, 0))), axis=1)
    return ((c[:, w:] - c[:, :-w]) / w).max(axis=1)


def event_probabilities(e: PathEnsemble, observed: TimeSeries, spec: EventSpec = EventSpec()):
    """Posterior probabilities of the observed record beating the reconstructed past.

    Level events: share of paths whose largest single-year value, decade mean
    or 30-year mean over ``start..pre_end`` stays below the observed value.
    Run-ups: share of paths whose loess smooth rises by more than the
    observed smooth's latest k-year rise anywhere in the path span.
    """
    if e.mode != "full":
        log.warning("event probabilities computed on a %s ensemble", e.mode)
    if not (e.start_year <= spec.pre_end < e.start_year + e.paths.shape[1]):
        raise DataError("pre-instrumental end year outside the path span")
    obs_end = observed.end_year
    thirty = spec.thirty or (obs_end - 29, obs_end)
    try:
        o_year = float(observed.at([spec.year])[0])
        o_dec = float(observed.at(np.arange(spec.decade[0], spec.decade[1] + 1)).mean())
        o_30 = float(observed.at(np.arange(thirty[0], thirty[1] + 1)).mean())
    except DataError as exc:
        raise DataError(f"window misalignment: {exc}") from exc
    pre = e.paths[:, : spec.pre_end - e.start_year + 1]
    out = {
        "warmest_year": float(np.mean(pre.max(axis=1) < o_year)),
        "warmest_decade": float(np.mean(_rolling_max_mean(pre, 10) < o_dec)),
        "warmest_30yr": float(np.mean(_rolling_max_mean(pre, 30) < o_30)),
    }
    obs = observed.complete()
    so = loess_matrix(obs.size, spec.span) @ obs
    sp = e.paths @ loess_matrix(e.paths.shape[1], spec.span).T
    for k in spec.runups:
        if k >= obs.size or k >= sp.shape[1]:
            raise DataError(f"run-up lag {k} longer than the series")
        o = so[-1] - so[-1 - k]
        out[f"runup_{k}"] = float(np.mean((sp[:, k:] - sp[:, :-k]).max(axis=1) > o))
    return out


# ---------------------------------------------------------------------------
# validation

def holdout_validate(cfg: BayesConfig, y: TimeSeries, X: ProxyMatrix, block="first30",
                     nulls=(), null_reps=1000, seed=0, window: AnalysisWindow = None,
                     block_len=30, workers=1):
    """Fit with one end of the instrumental window held out and score it.

    ``first30`` trains on the later years and backcasts the first block from
    the two observations after it; ``last30`` trains the forward-lag model on
    the earlier years and forecasts the last block. ``nulls`` is a sequence of
    PseudoProxyClass; each gets a p-value against OLS on 10 PCs of fresh
    pseudo-proxy matrices. Returns ``(rmse, {label: pvalue}, draws)``.
    """
    from .harness import BlockScheme, outperformance_pvalue
    from .modelzoo import ModelSpec

    w = window or AnalysisWindow(max(y.start_year, X.start_year), min(y.end_year, X.end_year))
    years = w.years
    if years.size <= block_len + 5:
        raise DataError("window too short for the holdout block")
    pcs = pc_scores(X, cfg.n_pcs)
    if block == "first30":
        test = years[:block_len]
        train = years[block_len:]
        direction = "backward"
        train = train[train + 2 <= y.end_year]
        anchors = tuple(y.at([test[-1] + 1, test[-1] + 2]))
        blk = (0, block_len)
    elif block == "last30":
        test = years[-block_len:]
        train = years[:-block_len]
        direction = "forward"
        train = train[train - 2 >= y.start_year]
        anchors = tuple(y.at([test[0] - 1, test[0] - 2]))
        blk = (years.size - block_len, years.size)
    else:
        raise DataError("block must be 'first30' or 'last30'")
    draws = gibbs_sample(pcs, y, cfg, train_years=train, direction=direction, workers=workers)
    pred = backcast_mean(draws, pcs, anchors, years=test)
    score = rmse(pred.values, y.at(test))
    pv = {}
    null_spec = ModelSpec("PCRegression", k=cfg.n_pcs)
    for i, cls in enumerate(nulls):
        pv[cls.label] = outperformance_pvalue(
            score, null_spec, cls, y, blk, n_series=X.n_cols, reps=null_reps,
            seed=derive_seed(seed, i), scheme=BlockScheme(block_len), window=w,
            workers=workers)
    return score, pv, draws
