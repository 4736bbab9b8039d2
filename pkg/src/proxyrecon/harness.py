"""Contiguous-block holdout evaluation and pseudo-proxy null benchmarks."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import modelzoo
from ._rng import derive_seed, substream
from .dataset import AnalysisWindow, ProxyMatrix, TimeSeries
from .errors import DataError, ProxyReconError
from .nullmodels import PseudoProxyClass, pseudo_array
from .numerics import rmse

log = logging.getLogger(__name__)

__all__ = [
    "BlockScheme",
    "HoldoutResult",
    "Comparison",
    "Envelope",
    "enumerate_blocks",
    "run_block_cv",
    "compare",
    "pseudo_envelope",
    "outperformance_pvalue",
]

_SCORING = {"full": "full_block", "full_block": "full_block",
            "middle20": "middle_20", "middle_20": "middle_20"}


@dataclass(frozen=True)
class BlockScheme:
    block_len: int = 30
    scoring: str = "full_block"
    total_years: int = None

    def __post_init__(self):
        if self.scoring not in _SCORING:
            raise DataError(f"unknown scoring {self.scoring!r}")
        object.__setattr__(self, "scoring", _SCORING[self.scoring])
        if self.block_len < 1:
            raise DataError("block_len must be >= 1")
        if self.total_years is not None and self.block_len > self.total_years:
            raise DataError("block_len exceeds total_years")
        if self.scoring == "middle_20" and self.block_len != 30:
            raise DataError("middle_20 scoring requires 30-year blocks")

    def scored(self, start, end):
        """Index range scored within block [start, end)."""
        if self.scoring == "middle_20":
            return start + 5, start + 25
        return start, end


def enumerate_blocks(total_years, block_len):
    """All contiguous holdout blocks as half-open index pairs, ascending."""
    if block_len < 1 or block_len > total_years:
        raise DataError(f"block_len {block_len} does not fit in {total_years} years")
    return [(s, s + block_len) for s in range(total_years - block_len + 1)]


def _pool_map(fn, items, workers=1):
    """Order-preserving map; threads only (numba kernels release the GIL)."""
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True, eq=False)
class HoldoutResult:
    spec: modelzoo.ModelSpec
    block_starts: np.ndarray  # first year of each block
    rmse: np.ndarray  # NaN where the fit failed
    seed: int
    errors: dict = field(default_factory=dict)  # block index -> message

    @property
    def per_block(self):
        return list(zip(self.block_starts.tolist(), self.rmse.tolist()))

    @property
    def median(self):
        return float(np.nanmedian(self.rmse))

    def summary(self):
        q1, q2, q3 = np.nanpercentile(self.rmse, [25, 50, 75])
        return dict(model=self.spec.label, blocks=int(self.rmse.size), median=float(q2),
                    q1=float(q1), q3=float(q3), iqr=float(q3 - q1),
                    failed=len(self.errors))


def _holdout_rmse(spec, y, X, Z, train, scored, seed):
    m = modelzoo.fit(spec, y, X, Z, seed=seed, train_years=train)
    return rmse(modelzoo.predict(m, scored, X, Z), y.at(scored))


def _window(y, window):
    w = window or y.span
    if y.window(w).has_missing:
        raise DataError(f"response has missing values inside {w}")
    return w


def run_block_cv(spec, y: TimeSeries, X: ProxyMatrix = None, Z: ProxyMatrix = None,
                 scheme: BlockScheme = BlockScheme(), seed=0, window: AnalysisWindow = None,
                 workers=1) -> HoldoutResult:
    """Refit ``spec`` on each block's complement (tuning included) and score the block.

    Block ``i`` fits with seed ``derive_seed(seed, i)``; failures are recorded
    as NaN plus a message and the run continues.
    """
    w = _window(y, window)
    years = w.years
    blocks = enumerate_blocks(years.size, scheme.block_len)

    def job(ib):
        i, (s, e) = ib
        train = np.concatenate([years[:s], years[e:]])
        a, b = scheme.scored(s, e)
        try:
            return _holdout_rmse(spec, y, X, Z, train, years[a:b], derive_seed(seed, i)), None
        except ProxyReconError as exc:
            log.warning("%s block %d failed: %s", spec.label, i, exc)
            return np.nan, str(exc)

    res = _pool_map(job, list(enumerate(blocks)), workers)
    errs = {i: msg for i, (_, msg) in enumerate(res) if msg is not None}
    return HoldoutResult(spec, years[[s for s, _ in blocks]], np.array([r for r, _ in res]),
                         int(seed), errs)


@dataclass(frozen=True)
class Comparison:
    wins: int
    ties: int
    losses: int

    @property
    def total(self):
        return self.wins + self.ties + self.losses

    @property
    def fraction(self):
        return self.wins / self.total if self.total else float("nan")


def compare(a: HoldoutResult, b: HoldoutResult) -> Comparison:
    """Blocks where ``a`` has strictly lower RMSE than ``b``; ties kept apart.

    Blocks where either side failed count as neither.
    """
    if not np.array_equal(a.block_starts, b.block_starts):
        raise DataError("results cover different blocks")
    ok = np.isfinite(a.rmse) & np.isfinite(b.rmse)
    ra, rb = a.rmse[ok], b.rmse[ok]
    return Comparison(int(np.sum(ra < rb)), int(np.sum(ra == rb)), int(np.sum(ra > rb)))


@dataclass(frozen=True, eq=False)
class Envelope:
    block_starts: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    draws: np.ndarray  # blocks x reps
    level: float

    def rows(self):
        return [dict(block_start=int(s), mean=float(m), lo=float(l), hi=float(h))
                for s, m, l, h in zip(self.block_starts, self.mean, self.lo, self.hi)]


def _pseudo_matrix(cls, w: AnalysisWindow, n_series, rng):
    names = tuple(f"pseudo_{j:04d}" for j in range(n_series))
    return ProxyMatrix(w.first_year, names, pseudo_array(cls, len(w), n_series, rng))


def _pseudo_rmse(spec, cls, y, Z, w, n_series, train, scored, seed):
    X = _pseudo_matrix(cls, w, n_series, substream(seed))
    return _holdout_rmse(spec, y, X, Z, train, scored, derive_seed(seed, 1))


def pseudo_envelope(spec, cls: PseudoProxyClass, y: TimeSeries, scheme: BlockScheme = BlockScheme(),
                    n_series=None, reps=100, level=0.95, seed=0, window: AnalysisWindow = None,
                    Z: ProxyMatrix = None, workers=1) -> Envelope:
    """Per-block holdout RMSE of ``spec`` refit on ``reps`` fresh pseudo-proxy matrices.

    Replicate ``r`` of block ``i`` draws its matrix (``n_series`` columns over
    the whole window) from ``substream(seed, i, r)``.
    """
    if n_series is None:
        if cls.kind != "empirical":
            raise DataError("n_series is required")
        n_series = cls.phi_list.size
    if reps < 1:
        raise DataError("reps must be >= 1")
    w = _window(y, window)
    years = w.years
    blocks = enumerate_blocks(years.size, scheme.block_len)
    jobs = [(i, r) for i in range(len(blocks)) for r in range(reps)]

    def job(ir):
        i, r = ir
        s, e = blocks[i]
        a, b = scheme.scored(s, e)
        train = np.concatenate([years[:s], years[e:]])
        return _pseudo_rmse(spec, cls, y, Z, w, n_series, train, years[a:b],
                            derive_seed(seed, i, r))

    D = np.array(_pool_map(job, jobs, workers)).reshape(len(blocks), reps)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(D, [tail, 1.0 - tail], axis=1)
    return Envelope(years[[s for s, _ in blocks]], D.mean(axis=1), lo, hi, D, level)


def outperformance_pvalue(model_rmse, spec_for_null, cls: PseudoProxyClass, y: TimeSeries,
                          block, n_series=None, reps=1000, seed=0, scheme: BlockScheme = None,
                          window: AnalysisWindow = None, Z=None, workers=1,
                          return_draws=False):
    """Share of pseudo-proxy replicates whose holdout RMSE is strictly below ``model_rmse``.

    ``block`` is a half-open index pair into the window, or an int index into
    ``enumerate_blocks``.
    """
    if not np.isfinite(model_rmse) or model_rmse < 0:
        raise DataError("model_rmse must be a finite non-negative number")
    if n_series is None:
        if cls.kind != "empirical":
            raise DataError("n_series is required")
        n_series = cls.phi_list.size
    scheme = scheme or BlockScheme()
    w = _window(y, window)
    years = w.years
    if isinstance(block, (int, np.integer)):
        block = enumerate_blocks(years.size, scheme.block_len)[block]
    s, e = block
    if not 0 <= s < e <= years.size:
        raise DataError(f"block {block} outside the window")
    a, b = scheme.scored(s, e) if e - s == scheme.block_len else (s, e)
    train = np.concatenate([years[:s], years[e:]])
    draws = np.array(_pool_map(
        lambda r: _pseudo_rmse(spec_for_null, cls, y, Z, w, n_series, train, years[a:b],
                               derive_seed(seed, r)),
        list(range(reps)), workers))
    p = float(np.mean(draws < model_rmse))
    return (p, draws) if return_draws else p
