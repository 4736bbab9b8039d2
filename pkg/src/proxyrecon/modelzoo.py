"""Reconstruction models behind one fit / predict / backcast interface."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import lasso as lassomod
from . import nullmodels
from ._rng import derive_seed, substream
from .dataset import AnalysisWindow, ProxyMatrix, TimeSeries
from .errors import DataError, NumericalError
from .numerics import ols_fit, principal_components

log = logging.getLogger(__name__)

__all__ = [
    "ModelSpec",
    "FittedModel",
    "fit",
    "predict",
    "backcast",
    "forward_stepwise",
    "zoo_ensemble_specs",
    "augmentation_test",
]

KINDS = (
    "InterceptOnly",
    "ArmaBaseline",
    "PCRegression",
    "LassoOnProxies",
    "LassoOnPCs",
    "StepwiseAIC",
    "StepwiseBIC",
    "TwoStageLassoLocal",
    "TwoStagePC",
)
SOURCES = ("proxies", "proxy_PCs")


@dataclass(frozen=True)
class ModelSpec:
    """One reconstruction model.

    ``k`` is the PC count for PCRegression and the number of PCs offered to
    LassoOnPCs and PC-sourced stepwise. ``g``/``p`` are the local and proxy
    PC counts of TwoStagePC. The ``cv_*`` fields tune every lasso stage.
    """

    kind: str
    k: int = None
    source: str = "proxies"
    g: int = None
    p: int = None
    cv_reps: int = 10
    cv_folds: int = 5
    grid_size: int = 100
    arma_max: int = 5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown model kind {self.kind!r}")
        if self.kind == "PCRegression" and (self.k is None or self.k < 1):
            raise DataError("PCRegression needs k >= 1")
        if self.kind == "LassoOnPCs" and self.k is None:
            object.__setattr__(self, "k", 20)
        if self.kind.startswith("Stepwise"):
            if self.source not in SOURCES:
                raise DataError(f"stepwise source must be one of {SOURCES}")
            if self.source == "proxy_PCs" and self.k is None:
                object.__setattr__(self, "k", 20)
        if self.kind == "TwoStagePC" and (self.g is None or self.p is None
                                          or self.g < 1 or self.p < 1):
            raise DataError("TwoStagePC needs g, p >= 1")
        if self.k is not None and self.k < 1:
            raise DataError("k must be >= 1")

    @property
    def label(self):
        if self.kind == "PCRegression":
            return f"PC{self.k}"
        if self.kind == "LassoOnPCs":
            return f"LassoPC{self.k}"
        if self.kind.startswith("Stepwise"):
            return f"{self.kind}_{'PC' if self.source == 'proxy_PCs' else 'proxies'}"
        if self.kind == "TwoStagePC":
            return f"TwoStagePC_g{self.g}_p{self.p}"
        return self.kind

    @property
    def needs_local(self):
        return self.kind.startswith("TwoStage")

    @classmethod
    def parse(cls, text, **hyper):
        """Parse labels such as ``PC5``, ``LassoOnProxies``, ``TwoStagePC_g5_p5``."""
        t = text.strip()
        if t in ("InterceptOnly", "ArmaBaseline", "LassoOnProxies", "TwoStageLassoLocal"):
            return cls(t, **hyper)
        if t.startswith("PC") and t[2:].isdigit():
            return cls("PCRegression", k=int(t[2:]), **hyper)
        if t.startswith("LassoPC") and t[7:].isdigit():
            return cls("LassoOnPCs", k=int(t[7:]), **hyper)
        if t == "LassoOnPCs":
            return cls(t, **hyper)
        for kind in ("StepwiseAIC", "StepwiseBIC"):
            if t == kind or t == kind + "_proxies":
                return cls(kind, source="proxies", **hyper)
            if t == kind + "_PC":
                return cls(kind, source="proxy_PCs", **hyper)
        if t.startswith("TwoStagePC_g"):
            g, p = t[len("TwoStagePC_g"):].split("_p")
            return cls("TwoStagePC", g=int(g), p=int(p), **hyper)
        raise DataError(f"unknown model label {text!r}")


@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: ModelSpec
    train_years: np.ndarray
    parts: dict = field(default_factory=dict)
    flags: tuple = ()

    @property
    def fallback(self):
        return "intercept_fallback" in self.flags


# ---------------------------------------------------------------------------
# helpers

def _train_years(y: TimeSeries, window, train_years):
    if train_years is not None:
        yrs = np.unique(np.asarray(train_years, int))
    elif window is not None:
        yrs = window.years
    else:
        yrs = y.years
    if yrs.size < 3:
        raise DataError("need at least 3 training years")
    return yrs


def _pc_basis(M: ProxyMatrix, k):
    """PCs of the full-span matrix (all complete rows), centered there."""
    if M.missing.any():
        raise DataError("principal components need a complete proxy matrix")
    return principal_components(M.data, min(k, *M.shape), center=True)


def _lasso(Xtr, ytr, spec, seed, names=()):
    return lassomod.lasso_cv_fit(Xtr, ytr, reps=spec.cv_reps, folds=spec.cv_folds,
                               grid_size=spec.grid_size, seed=seed, names=names)[0]


def forward_stepwise(X, y, criterion="aic", max_terms=None):
    """Forward selection from the intercept-only model.

    Adds the column that most lowers ``n log(SSE/n) + c*k`` (c = 2 for AIC,
    log n for BIC) and stops when no addition lowers it. Returns the chosen
    column indices in order of entry and the criterion after each step.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float).ravel()
    n, m = X.shape
    c = 2.0 if criterion == "aic" else np.log(n)
    if max_terms is None:
        max_terms = n - 3
    r = y - y.mean()
    Xr = X - X.mean(axis=0)
    sse = float(r @ r)
    if sse <= 0:
        return [], [-np.inf]
    crit = [n * np.log(sse / n)]
    chosen = []
    avail = np.ones(m, bool)
    scale = np.einsum("ij,ij->j", Xr, Xr)
    while len(chosen) < min(max_terms, m):
        ss = np.einsum("ij,ij->j", Xr, Xr)
        ok = avail & (ss > 1e-10 * np.maximum(scale, 1e-300))
        if not ok.any():
            break
        gain = np.where(ok, (Xr.T @ r) ** 2 / np.where(ok, ss, 1.0), -np.inf)
        j = int(np.argmax(gain))
        new_sse = sse - gain[j]
        new_sse = max(new_sse, np.finfo(float).tiny)
        val = n * np.log(new_sse / n) + c * (len(chosen) + 1)
        if not val < crit[-1]:
            break
        q = Xr[:, j] / np.sqrt(ss[j])
        r = r - (q @ r) * q
        Xr = Xr - np.outer(q, q @ Xr)
        sse = float(r @ r)
        chosen.append(j)
        avail[j] = False
        crit.append(val)
    return chosen, crit


def _segments(years):
    """Maximal runs of consecutive years."""
    cuts = np.flatnonzero(np.diff(years) != 1) + 1
    return np.split(years, cuts)


# ---------------------------------------------------------------------------
# fit

def fit(spec: ModelSpec, y: TimeSeries, X: ProxyMatrix = None, Z: ProxyMatrix = None,
        window: AnalysisWindow = None, seed=0, train_years=None) -> FittedModel:
    """Fit ``spec`` on the training years (``train_years`` or ``window``).

    PC-based kinds compute components on the full span of ``X`` (and ``Z``),
    never on the training rows only.
    """
    yrs = _train_years(y, window, train_years)
    yv = y.at(yrs)
    kind = spec.kind
    parts = {}
    flags = ()
    if kind != "InterceptOnly" and kind != "ArmaBaseline" and X is None:
        raise DataError(f"{spec.label} needs a proxy matrix")
    if spec.needs_local and Z is None:
        raise DataError(f"{spec.label} needs local temperatures")

    if kind == "InterceptOnly":
        parts["mean"] = float(yv.mean())

    elif kind == "ArmaBaseline":
        seg = max(_segments(yrs), key=len)
        hist = y.at(seg)
        parts["model"] = nullmodels.arma_select(hist, spec.arma_max, spec.arma_max)
        parts["segment"] = seg
        parts["history"] = hist

    elif kind == "PCRegression":
        basis = _pc_basis(X, spec.k)
        if basis.k < spec.k:
            raise DataError(f"PCRegression k={spec.k} exceeds available components")
        parts["basis"] = basis
        parts["fit"] = ols_fit(basis.project(X.rows(yrs)), yv)

    elif kind == "LassoOnProxies":
        parts["fit"] = _lasso(X.rows(yrs), yv, spec, derive_seed(seed, 1), X.names)

    elif kind == "LassoOnPCs":
        basis = _pc_basis(X, spec.k)
        parts["basis"] = basis
        parts["fit"] = _lasso(basis.project(X.rows(yrs)), yv, spec, derive_seed(seed, 1))

    elif kind in ("StepwiseAIC", "StepwiseBIC"):
        if spec.source == "proxy_PCs":
            basis = _pc_basis(X, spec.k)
            parts["basis"] = basis
            D = basis.project(X.rows(yrs))
        else:
            D = X.rows(yrs)
        chosen, crit = forward_stepwise(D, yv, "aic" if kind == "StepwiseAIC" else "bic")
        parts["chosen"] = np.array(chosen, int)
        parts["criterion"] = np.array(crit)
        parts["fit"] = ols_fit(D[:, chosen], yv)

    elif kind == "TwoStageLassoLocal":
        s1 = _lasso(Z.rows(yrs), yv, spec, derive_seed(seed, 1), Z.names)
        parts["stage1"] = s1
        sel = s1.support
        if sel.size == 0:
            log.warning("stage-1 lasso selected no local series; falling back to the mean")
            flags = ("intercept_fallback",)
        Xtr = X.rows(yrs)
        Ztr = Z.rows(yrs)
        parts["stage2"] = {int(j): _lasso(Xtr, Ztr[:, j], spec, derive_seed(seed, 2, j), X.names)
                           for j in sel}

    elif kind == "TwoStagePC":
        zb = _pc_basis(Z, spec.g)
        xb = _pc_basis(X, spec.p)
        if zb.k < spec.g or xb.k < spec.p:
            raise DataError(f"{spec.label}: not enough components available")
        zs = zb.project(Z.rows(yrs))
        xs = xb.project(X.rows(yrs))
        parts["zbasis"], parts["xbasis"] = zb, xb
        parts["stage1"] = ols_fit(zs, yv)
        parts["stage2"] = [ols_fit(xs, zs[:, i]) for i in range(spec.g)]

    return FittedModel(spec, yrs, parts, flags)


# ---------------------------------------------------------------------------
# predict

def _arma_predict(m: FittedModel, years):
    model = m.parts["model"]
    seg = m.parts["segment"]
    hist = m.parts["history"]
    out = np.empty(years.size)
    after = years > seg[-1]
    before = years < seg[0]
    if np.any(~(after | before)):
        raise DataError("ARMA baseline predicts only outside its training segment")
    if after.any():
        h = years[after] - seg[-1]
        out[after] = nullmodels.arma_forecast(model, hist, int(h.max()))[h - 1]
    if before.any():
        # Gaussian ARMA is time-reversible: the same model forecasts backwards
        h = seg[0] - years[before]
        out[before] = nullmodels.arma_forecast(model, hist[::-1], int(h.max()))[h - 1]
    return out


def predict(m: FittedModel, years, X: ProxyMatrix = None, Z: ProxyMatrix = None,
            use_local=False) -> np.ndarray:
    """Predictions at ``years``.

    With ``use_local=True`` two-stage models feed observed local temperatures
    (or their PCs) straight into stage one instead of proxy-based estimates.
    """
    years = np.asarray(years.years if isinstance(years, AnalysisWindow) else years, int)
    kind = m.spec.kind
    if kind == "InterceptOnly":
        return np.full(years.size, m.parts["mean"])
    if kind == "ArmaBaseline":
        return _arma_predict(m, years)
    if X is None:
        raise DataError(f"{m.spec.label} needs proxies to predict")
    if kind == "PCRegression":
        return m.parts["fit"].predict(m.parts["basis"].project(X.rows(years)))
    if kind == "LassoOnProxies":
        return m.parts["fit"].predict(X.rows(years))
    if kind == "LassoOnPCs":
        return m.parts["fit"].predict(m.parts["basis"].project(X.rows(years)))
    if kind in ("StepwiseAIC", "StepwiseBIC"):
        D = X.rows(years)
        if "basis" in m.parts:
            D = m.parts["basis"].project(D)
        return m.parts["fit"].predict(D[:, m.parts["chosen"]])
    if kind == "TwoStageLassoLocal":
        s1 = m.parts["stage1"]
        if use_local:
            return s1.predict(Z.rows(years))
        out = np.full(years.size, s1.intercept)
        Xr = X.rows(years)
        for j, s2 in m.parts["stage2"].items():
            out += s1.coefficients[j] * s2.predict(Xr)
        return out
    if kind == "TwoStagePC":
        if use_local:
            zs = m.parts["zbasis"].project(Z.rows(years))
        else:
            xs = m.parts["xbasis"].project(X.rows(years))
            zs = np.column_stack([f.predict(xs) for f in m.parts["stage2"]])
        return m.parts["stage1"].predict(zs)
    raise DataError(f"unknown kind {kind}")


def backcast(m: FittedModel, X_hist: ProxyMatrix = None, years=None) -> TimeSeries:
    """Apply the fitted map year by year over the historical span."""
    if years is None:
        if X_hist is None:
            raise DataError("backcast needs proxies or explicit years")
        years = X_hist.years
    years = np.asarray(years.years if isinstance(years, AnalysisWindow) else years, int)
    return TimeSeries(int(years[0]), predict(m, years, X_hist), name=m.spec.label)


# ---------------------------------------------------------------------------
# ensemble and augmentation

def zoo_ensemble_specs(**hyper):
    """The 27 models: intercept, 4 PC regressions, 2 lasso, 4 stepwise, 16 two-stage PC."""
    specs = [ModelSpec("InterceptOnly", **hyper)]
    specs += [ModelSpec("PCRegression", k=k, **hyper) for k in (1, 5, 10, 20)]
    specs += [ModelSpec("LassoOnProxies", **hyper), ModelSpec("LassoOnPCs", **hyper)]
    for kind in ("StepwiseAIC", "StepwiseBIC"):
        specs += [ModelSpec(kind, source=s, **hyper) for s in SOURCES]
    grid = (1, 5, 10, 20)
    specs += [ModelSpec("TwoStagePC", g=g, p=p, **hyper) for g in grid for p in grid]
    return specs


@dataclass(frozen=True, eq=False)
class AugmentationResult:
    percent_pseudo: float
    per_block: np.ndarray  # fraction per block, NaN where nothing was selected
    n_selected: np.ndarray

    def __float__(self):
        return self.percent_pseudo


def augmentation_test(X: ProxyMatrix, cls, y: TimeSeries, scheme, seed=0, spec=None,
                      pseudo=None, window=None, workers=1) -> AugmentationResult:
    """Share of lasso-selected variables that are pseudo-proxies, averaged over blocks.

    Each block's in-sample proxy rows are joined by an equally sized matrix
    of pseudo-proxies drawn from ``cls``; the combined column order is
    shuffled so the solver's cyclic order favours neither half. ``pseudo``
    may be a callable ``(rng, n, m) -> array`` overriding the generator.
    """
    from .harness import enumerate_blocks, _pool_map

    spec = spec or ModelSpec("LassoOnProxies")
    window = window or y.span
    years = window.years
    blocks = enumerate_blocks(years.size, scheme.block_len)

    def job(b):
        i, (s, e) = b
        tr = np.concatenate([years[:s], years[e:]])
        Xtr = X.rows(tr)
        n, m = Xtr.shape
        rng = substream(seed, i, 0)
        P = pseudo(rng, n, m) if pseudo is not None else nullmodels.pseudo_array(cls, n, m, rng)
        A = np.column_stack([Xtr, P])
        perm = rng.permutation(2 * m)
        f = _lasso(A[:, perm], y.at(tr), spec, derive_seed(seed, i, 1))
        sel = perm[f.support]
        if sel.size == 0:
            log.info("block %d: lasso selected nothing; excluded", i)
            return np.nan, 0
        return float(np.mean(sel >= m)), int(sel.size)

    res = _pool_map(job, list(enumerate(blocks)), workers)
    frac = np.array([r[0] for r in res])
    cnt = np.array([r[1] for r in res])
    if np.all(np.isnan(frac)):
        raise NumericalError("lasso selected no variables on any block")
    return AugmentationResult(float(100 * np.nanmean(frac)), frac, cnt)
