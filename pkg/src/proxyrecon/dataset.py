"""Year-indexed series and proxy tables: loading, windowing, standardization.

Missing cells are tracked by an explicit boolean mask. The stored value of a
missing cell is NaN, so any arithmetic that forgets to check the mask yields
NaN instead of a plausible-looking number.
"""
from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._rng import substream
from .errors import DataError

log = logging.getLogger(__name__)

__all__ = [
    "AnalysisWindow",
    "TimeSeries",
    "ProxyMatrix",
    "load_table",
    "write_table",
    "align",
    "standardize",
    "drop_named",
    "gen_synthetic_world",
    "gen_synthetic_locals",
    "INSTRUMENTAL",
    "MILLENNIAL",
]


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AnalysisWindow:
    first_year: int
    last_year: int

    def __post_init__(self):
        if int(self.first_year) > int(self.last_year):
            raise DataError(f"empty window {self.first_year}-{self.last_year}")
        object.__setattr__(self, "first_year", int(self.first_year))
        object.__setattr__(self, "last_year", int(self.last_year))

    @property
    def years(self):
        return np.arange(self.first_year, self.last_year + 1)

    def __len__(self):
        return self.last_year - self.first_year + 1

    @classmethod
    def parse(cls, text):
        """``"1850-1998"`` or ``"1850:1998"``."""
        m = re.fullmatch(r"\s*(-?\d+)\s*[-:]\s*(-?\d+)\s*", text)
        if not m:
            raise DataError(f"cannot parse window {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))

    def __str__(self):
        return f"{self.first_year}-{self.last_year}"


INSTRUMENTAL = AnalysisWindow(1850, 1998)
MILLENNIAL = AnalysisWindow(998, 1998)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Annual series starting at ``start_year``; no gaps in the index."""

    start_year: int
    values: np.ndarray
    missing: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 1:
            raise DataError("a series needs at least one year")
        miss = np.isnan(v) if self.missing is None else np.asarray(self.missing, bool).ravel()
        if miss.shape != v.shape:
            raise DataError("missing mask does not match values")
        v = v.copy()
        v[miss] = np.nan
        object.__setattr__(self, "start_year", int(self.start_year))
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "missing", _frozen(miss, bool))

    def __len__(self):
        return self.values.size

    @property
    def end_year(self):
        return self.start_year + len(self) - 1

    @property
    def years(self):
        return np.arange(self.start_year, self.end_year + 1)

    @property
    def span(self):
        return AnalysisWindow(self.start_year, self.end_year)

    @property
    def has_missing(self):
        return bool(self.missing.any())

    def at(self, years):
        """Values at the given year(s); raises on out-of-range or missing."""
        idx = np.asarray(years) - self.start_year
        if np.any(idx < 0) or np.any(idx >= len(self)):
            raise DataError(f"{self.name or 'series'}: years outside {self.span}")
        if np.any(self.missing[idx]):
            raise DataError(f"{self.name or 'series'}: missing value in requested years")
        return self.values[idx]

    def window(self, w: AnalysisWindow) -> "TimeSeries":
        _check_within(w, self.start_year, self.end_year)
        i, j = w.first_year - self.start_year, w.last_year - self.start_year + 1
        return TimeSeries(w.first_year, self.values[i:j], self.missing[i:j], self.name)

    def complete(self):
        """Values as a plain array; raises if anything is missing."""
        if self.has_missing:
            raise DataError(f"{self.name or 'series'} has missing values")
        return np.array(self.values)


@dataclass(frozen=True, eq=False)
class ProxyMatrix:
    """Years x series table sharing one annual index.

    ``standardization`` holds ``(means, sds, window)`` once the columns have
    been centered and scaled.
    """

    start_year: int
    names: tuple
    data: np.ndarray
    missing: np.ndarray = None
    standardization: tuple = None

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if d.ndim != 2 or d.shape[0] < 1:
            raise DataError("proxy matrix must be 2-d with at least one year")
        names = tuple(str(n) for n in self.names)
        if len(names) != d.shape[1]:
            raise DataError(f"{len(names)} names for {d.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        miss = np.isnan(d) if self.missing is None else np.asarray(self.missing, bool)
        if miss.shape != d.shape:
            raise DataError("missing mask does not match data")
        d = d.copy()
        d[miss] = np.nan
        object.__setattr__(self, "start_year", int(self.start_year))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "data", _frozen(d))
        object.__setattr__(self, "missing", _frozen(miss, bool))

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_years(self):
        return self.data.shape[0]

    @property
    def n_cols(self):
        return self.data.shape[1]

    @property
    def end_year(self):
        return self.start_year + self.n_years - 1

    @property
    def years(self):
        return np.arange(self.start_year, self.end_year + 1)

    @property
    def span(self):
        return AnalysisWindow(self.start_year, self.end_year)

    @property
    def columns(self):
        return {n: self.column(n) for n in self.names}

    def column(self, name) -> TimeSeries:
        j = self.names.index(name)
        return TimeSeries(self.start_year, self.data[:, j], self.missing[:, j], name)

    def rows(self, years):
        """Complete rows for the given years as an array (years x cols)."""
        idx = np.asarray(years) - self.start_year
        if np.any(idx < 0) or np.any(idx >= self.n_years):
            raise DataError(f"requested years outside proxy span {self.span}")
        if np.any(self.missing[idx]):
            raise DataError("covariate gap: missing proxy values in requested years")
        return np.array(self.data[idx])

    def window(self, w: AnalysisWindow) -> "ProxyMatrix":
        _check_within(w, self.start_year, self.end_year)
        i, j = w.first_year - self.start_year, w.last_year - self.start_year + 1
        return ProxyMatrix(w.first_year, self.names, self.data[i:j], self.missing[i:j],
                           self.standardization)

    def select(self, names: Sequence[str]) -> "ProxyMatrix":
        idx = [self.names.index(n) for n in names]
        std = None
        if self.standardization is not None:
            m, s, w = self.standardization
            std = (m[idx], s[idx], w)
        return ProxyMatrix(self.start_year, tuple(names), self.data[:, idx],
                           self.missing[:, idx], std)

    @classmethod
    def from_series(cls, series: Iterable[TimeSeries]):
        series = list(series)
        if not series:
            raise DataError("no columns")
        s0 = series[0]
        for s in series[1:]:
            if s.start_year != s0.start_year or len(s) != len(s0):
                raise DataError("columns must share start year and length")
        return cls(s0.start_year, tuple(s.name for s in series),
                   np.column_stack([s.values for s in series]),
                   np.column_stack([s.missing for s in series]))


def _check_within(w, first, last):
    if w.first_year < first or w.last_year > last:
        raise DataError(f"window {w} outside data span {first}-{last}")


# ---------------------------------------------------------------------------
# CSV

def _parse_value(cell, lineno):
    cell = cell.strip()
    if cell == "":
        return np.nan, True
    try:
        return float(cell), False
    except ValueError:
        raise DataError(f"line {lineno}: cannot parse value {cell!r}") from None


def _parse_year(cell, lineno):
    try:
        return int(cell.strip())
    except ValueError:
        raise DataError(f"line {lineno}: year {cell!r} is not an integer") from None


def load_table(path, format="wide", squeeze=True):
    """Read a UTF-8 CSV table.

    ``wide``: ``year,<name1>,<name2>,...``; ``long``: ``year,name,value``.
    Empty cells are missing. Years absent from the file inside its range are
    filled with missing rows so the index has no gaps. With ``squeeze`` a
    single-column table comes back as a TimeSeries.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if format == "wide":
        names, years, vals, miss = _read_wide(header, rows[1:])
    elif format == "long":
        names, years, vals, miss = _read_long(header, rows[1:])
    else:
        raise DataError(f"unknown table format {format!r}")
    if not years:
        raise DataError(f"{path}: no data rows")

    y0, y1 = min(years), max(years)
    data = np.full((y1 - y0 + 1, len(names)), np.nan)
    mask = np.ones_like(data, dtype=bool)
    idx = np.asarray(years) - y0
    data[idx] = vals
    mask[idx] = miss
    if squeeze and len(names) == 1:
        return TimeSeries(y0, data[:, 0], mask[:, 0], names[0])
    return ProxyMatrix(y0, tuple(names), data, mask)


def _read_wide(header, body):
    if len(header) < 2 or header[0].lower() != "year":
        raise DataError("wide table header must be 'year,<name>,...'")
    names = header[1:]
    years, vals, miss, seen = [], [], [], set()
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        yr = _parse_year(row[0], lineno)
        if yr in seen:
            raise DataError(f"line {lineno}: duplicate year {yr}")
        if years and yr < years[-1]:
            raise DataError(f"line {lineno}: year {yr} out of order (non-monotone years)")
        seen.add(yr)
        parsed = [_parse_value(c, lineno) for c in row[1:]]
        years.append(yr)
        vals.append([p[0] for p in parsed])
        miss.append([p[1] for p in parsed])
    return names, years, np.array(vals, float).reshape(len(years), len(names)), \
        np.array(miss, bool).reshape(len(years), len(names))


def _read_long(header, body):
    if [h.lower() for h in header] != ["year", "name", "value"]:
        raise DataError("long table header must be 'year,name,value'")
    names, cells = [], {}
    for lineno, row in enumerate(body, start=2):
        if len(row) != 3:
            raise DataError(f"line {lineno}: expected 3 fields, got {len(row)}")
        yr = _parse_year(row[0], lineno)
        nm = row[1].strip()
        if nm not in cells:
            names.append(nm)
            cells[nm] = {}
        if yr in cells[nm]:
            raise DataError(f"line {lineno}: duplicate year {yr} for {nm!r}")
        cells[nm][yr] = _parse_value(row[2], lineno)
    years = sorted({y for c in cells.values() for y in c})
    vals = np.full((len(years), len(names)), np.nan)
    miss = np.ones_like(vals, dtype=bool)
    pos = {y: i for i, y in enumerate(years)}
    for j, nm in enumerate(names):
        for yr, (v, m) in cells[nm].items():
            vals[pos[yr], j] = v
            miss[pos[yr], j] = m
    return names, years, vals, miss


def _fmt(v, m):
    return "" if m else repr(float(v))


def write_table(data, path, format="wide"):
    """Write a TimeSeries or ProxyMatrix; floats use ``repr`` so they round-trip."""
    if isinstance(data, TimeSeries):
        data = ProxyMatrix(data.start_year, (data.name or "value",), data.values[:, None],
                           data.missing[:, None])
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if format == "wide":
            w.writerow(["year", *data.names])
            for i, yr in enumerate(data.years):
                w.writerow([int(yr), *(_fmt(v, m) for v, m in zip(data.data[i], data.missing[i]))])
        elif format == "long":
            w.writerow(["year", "name", "value"])
            for j, nm in enumerate(data.names):
                for i, yr in enumerate(data.years):
                    w.writerow([int(yr), nm, _fmt(data.data[i, j], data.missing[i, j])])
        else:
            raise DataError(f"unknown table format {format!r}")
    return path


# ---------------------------------------------------------------------------
# Windowing and scaling

def align(data: ProxyMatrix, window: AnalysisWindow, policy="reject_missing"):
    """Cut ``data`` to ``window``.

    Returns ``(matrix, dropped_names)``. ``reject_missing`` raises if any cell
    in the window is missing; ``drop_incomplete_columns`` removes such columns.
    """
    if isinstance(data, TimeSeries):
        data = ProxyMatrix(data.start_year, (data.name or "value",), data.values[:, None],
                           data.missing[:, None])
    out = data.window(window)
    bad = out.missing.any(axis=0)
    if policy == "reject_missing":
        if bad.any():
            cols = [n for n, b in zip(out.names, bad) if b]
            raise DataError(f"{len(cols)} column(s) have missing cells in {window}: "
                            f"{', '.join(cols[:5])}{' ...' if len(cols) > 5 else ''}")
        return out, []
    if policy == "drop_incomplete_columns":
        dropped = [n for n, b in zip(out.names, bad) if b]
        keep = [n for n, b in zip(out.names, bad) if not b]
        if not keep:
            raise DataError(f"no column is complete over {window}")
        if dropped:
            log.info("align: dropped %d incomplete column(s) over %s", len(dropped), window)
        return out.select(keep), dropped
    raise DataError(f"unknown missing-data policy {policy!r}")


def standardize(data: ProxyMatrix, window: AnalysisWindow = None) -> ProxyMatrix:
    """Center and scale each column using mean and sd (n-1) over ``window``.

    The transform is applied to the whole column span; only the statistics
    come from the window.
    """
    window = window or data.span
    ref = data.window(window)
    if ref.missing.any():
        raise DataError(f"missing cells inside standardization window {window}")
    mu = ref.data.mean(axis=0)
    sd = ref.data.std(axis=0, ddof=1) if ref.n_years > 1 else np.zeros(ref.n_cols)
    const = ~(sd > 0)
    if const.any():
        bad = [n for n, c in zip(data.names, const) if c]
        raise DataError(f"constant column(s) over {window}: {', '.join(bad[:5])}")
    z = (data.data - mu) / sd
    return ProxyMatrix(data.start_year, data.names, z, data.missing, (mu, sd, window))


def drop_named(data: ProxyMatrix, names: Iterable[str]) -> ProxyMatrix:
    names = list(names)
    unknown = [n for n in names if n not in data.names]
    if unknown:
        raise DataError(f"unknown column name(s): {', '.join(unknown)}")
    drop = set(names)
    return data.select([n for n in data.names if n not in drop])


# ---------------------------------------------------------------------------
# Synthetic worlds

def _ar1_unit(rng, phi, n, m):
    """Stationary AR(1) columns with unit marginal variance."""
    eps = rng.standard_normal((n, m))
    out = np.empty((n, m))
    out[0] = eps[0]
    scale = np.sqrt(1.0 - phi * phi)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + scale * eps[t]
    return out


def gen_synthetic_world(n_years, n_proxies, signal, proxy_ar=0.0, temp_ar=0.0, seed=0,
                        start_year=1850):
    """Temperature series plus proxies with a known share of signal.

    Temperature is a stationary AR(1) with coefficient ``temp_ar`` and unit
    marginal variance. Each proxy is ``signal * temperature + (1 - signal) *
    noise`` with independent unit-variance AR(``proxy_ar``) noise, then
    standardized over the full span. The population correlation between a
    proxy and temperature is therefore ``signal / sqrt(signal**2 + (1-signal)**2)``.
    """
    if n_years < 10:
        raise DataError("n_years must be >= 10")
    if n_proxies < 1:
        raise DataError("n_proxies must be >= 1")
    if not 0.0 <= signal <= 1.0:
        raise DataError("signal must lie in [0, 1]")
    if not (0.0 <= proxy_ar < 1.0 and 0.0 <= temp_ar < 1.0):
        raise DataError("AR coefficients must lie in [0, 1)")
    temp = _ar1_unit(substream(seed, 0), temp_ar, n_years, 1)[:, 0]
    noise = _ar1_unit(substream(seed, 1), proxy_ar, n_years, n_proxies)
    raw = signal * temp[:, None] + (1.0 - signal) * noise
    names = tuple(f"proxy_{j:03d}" for j in range(n_proxies))
    X = standardize(ProxyMatrix(start_year, names, raw))
    return TimeSeries(start_year, temp, name="temperature"), X


def gen_synthetic_locals(temperature: TimeSeries, n_local, signal=0.7, seed=0):
    """Local temperature columns correlated with a global series (standardized)."""
    rng = substream(seed, 2)
    t = temperature.complete()
    t = (t - t.mean()) / t.std(ddof=1)
    raw = signal * t[:, None] + (1.0 - signal) * rng.standard_normal((t.size, n_local))
    names = tuple(f"local_{j:04d}" for j in range(n_local))
    return standardize(ProxyMatrix(temperature.start_year, names, raw))
