"""Command-line front end.

Each subcommand writes into ``<out>/<subcommand>/`` and leaves a
``manifest.txt`` recording the resolved settings, seed, versions and wall
time. Exit codes: 1 configuration error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bayes, harness, modelzoo, nullmodels
from .dataset import (AnalysisWindow, ProxyMatrix, TimeSeries, align, drop_named,
                      gen_synthetic_locals, gen_synthetic_world, load_table, standardize)
from .errors import ConfigError, DataError, NumericalError, ProxyReconError

log = logging.getLogger("proxyrecon")

SUBCOMMANDS = ("ingest", "cv", "null-bench", "zoo-backcast", "bayes-fit", "bayes-backcast",
               "bayes-validate", "events", "report")
NULLS = ("white", "ar1_0.25", "ar1_0.4", "empirical", "brownian")

DEFAULTS = {
    "data": {"temperature": "", "proxies": "", "local": "", "format": "wide",
             "exclude": "", "exclude_millennial": ""},
    "run": {"seed": "0", "window": "1850-1998", "millennial": "998-1998", "block_len": "30",
            "scoring": "full", "workers": "1", "reps": "100", "null": "",
            "models": "LassoOnProxies,InterceptOnly,ArmaBaseline", "cv_reps": "10",
            "cv_folds": "5", "grid_size": "100", "event_year": "1998",
            "event_decade": "1997-2006"},
    "bayes": {"n_pcs": "10", "iters": "5000", "burnin": "1000", "thin": "2", "chains": "4"},
    "synthetic": {"enabled": "false", "first_year": "1700", "last_year": "2006",
                  "n_proxies": "20", "n_local": "30", "signal": "0.5", "temp_ar": "0.6",
                  "proxy_ar": "0.3"},
}

# artifacts the report collates, by producing subcommand
REPORT_INPUTS = {
    "cv": "summary.json",
    "null-bench": "spurious.csv",
    "zoo-backcast": "backcast.csv",
    "bayes-fit": "diagnostics.json",
    "bayes-backcast": "bands.csv",
    "bayes-validate": "validation.csv",
    "events": "events.json",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="proxyrecon", description="Proxy temperature reconstruction toolkit.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="INI file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.add_argument("--workers", type=int)
    p.add_argument("--window", help="instrumental window, e.g. 1850-1998")
    p.add_argument("--block-len", type=int)
    p.add_argument("--scoring", choices=("full", "middle20"))
    p.add_argument("--null", choices=NULLS,
                   help="pseudo-proxy class (cv: adds an envelope; bayes-validate: default all)")
    p.add_argument("--reps", type=int)
    p.add_argument("--models", help="comma-separated model labels")
    p.add_argument("--synthetic", action="store_true",
                   help="use a generated world instead of data files")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    settings: dict
    out: Path
    command: str
    argv: list = field(default_factory=list)

    def get(self, section, key):
        return self.settings[section][key]

    def int(self, section, key):
        try:
            return int(self.settings[section][key])
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} must be an integer") from exc

    def float(self, section, key):
        try:
            return float(self.settings[section][key])
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} must be a number") from exc

    def window(self, key="window"):
        try:
            return AnalysisWindow.parse(self.get("run", key))
        except DataError as exc:
            raise ConfigError(str(exc)) from exc

    def names(self, section, key):
        return [s.strip() for s in self.get(section, key).split(",") if s.strip()]

    @property
    def seed(self):
        return self.int("run", "seed")

    @property
    def workers(self):
        return self.int("run", "workers")

    @property
    def synthetic(self):
        return self.get("synthetic", "enabled").lower() in ("1", "true", "yes", "on")


def resolve_config(args) -> RunConfig:
    settings = {s: dict(v) for s, v in DEFAULTS.items()}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        for sec in cp.sections():
            if sec not in settings:
                raise ConfigError(f"unknown config section [{sec}]")
            for k, v in cp[sec].items():
                if k not in settings[sec]:
                    raise ConfigError(f"unknown key {k!r} in [{sec}]")
                settings[sec][k] = v
    flags = {"seed": args.seed, "workers": args.workers, "window": args.window,
             "block_len": args.block_len, "scoring": args.scoring, "null": args.null,
             "reps": args.reps, "models": args.models}
    for k, v in flags.items():
        if v is not None:
            settings["run"][k] = str(v)
    if args.synthetic:
        settings["synthetic"]["enabled"] = "true"
    cfg = RunConfig(settings, Path(args.out), args.command)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    seed = cfg.seed
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    cfg.window()
    cfg.window("millennial")
    if cfg.int("run", "block_len") < 1 or cfg.int("run", "reps") < 1:
        raise ConfigError("block_len and reps must be >= 1")
    if cfg.get("run", "scoring") not in ("full", "middle20"):
        raise ConfigError("scoring must be full or middle20")
    if cfg.get("run", "null") not in NULLS + ("",):
        raise ConfigError(f"null must be one of {NULLS}")
    if cfg.get("data", "format") not in ("wide", "long"):
        raise ConfigError("format must be wide or long")
    for label in cfg.names("run", "models"):
        try:
            modelzoo.ModelSpec.parse(label)
        except DataError as exc:
            raise ConfigError(str(exc)) from exc
    if not cfg.synthetic and cfg.command not in ("null-bench", "report"):
        for key in ("temperature", "proxies"):
            if not cfg.get("data", key):
                raise ConfigError(f"[data] {key} is required (or pass --synthetic)")
    for key in ("temperature", "proxies", "local"):
        v = cfg.get("data", key)
        if v and not cfg.synthetic and not Path(v).is_file():
            raise ConfigError(f"[data] {key}: file not found: {v}")


# ---------------------------------------------------------------------------
# data

@dataclass
class Inputs:
    y: TimeSeries
    X_inst: ProxyMatrix  # instrumental-window set, standardized there
    X_mill: ProxyMatrix  # complete over the millennial window, standardized there
    Z: ProxyMatrix = None
    dropped_inst: tuple = ()
    dropped_mill: tuple = ()


def load_inputs(cfg: RunConfig) -> Inputs:
    w = cfg.window()
    wm = cfg.window("millennial")
    if cfg.synthetic:
        first = cfg.int("synthetic", "first_year")
        last = cfg.int("synthetic", "last_year")
        wm = AnalysisWindow(max(wm.first_year, first), wm.last_year)
        y_all, X_all = gen_synthetic_world(
            last - first + 1, cfg.int("synthetic", "n_proxies"), cfg.float("synthetic", "signal"),
            proxy_ar=cfg.float("synthetic", "proxy_ar"), temp_ar=cfg.float("synthetic", "temp_ar"),
            seed=cfg.seed, start_year=first)
        y = y_all.window(AnalysisWindow(w.first_year, last))
        X = X_all.window(AnalysisWindow(first, wm.last_year))
        Z = gen_synthetic_locals(y.window(w), cfg.int("synthetic", "n_local"), seed=cfg.seed)
    else:
        fmt = cfg.get("data", "format")
        y = load_table(cfg.get("data", "temperature"), fmt)
        if not isinstance(y, TimeSeries):
            raise DataError("temperature file must hold a single series")
        X = load_table(cfg.get("data", "proxies"), fmt, squeeze=False)
        Z = None
        if cfg.get("data", "local"):
            Z = load_table(cfg.get("data", "local"), fmt, squeeze=False)
            Z, _ = align(Z, w, "drop_incomplete_columns")
            Z = standardize(Z, w)
        excl = cfg.names("data", "exclude")
        if excl:
            X = drop_named(X, excl)
    Xi, di = align(X, w, "drop_incomplete_columns")
    Xi = standardize(Xi, w)
    Xm, dm = align(X, wm, "drop_incomplete_columns")
    em = cfg.names("data", "exclude_millennial")
    if em:
        Xm = drop_named(Xm, em)
    Xm = standardize(Xm, wm)
    if y.window(w).has_missing:
        raise DataError(f"temperature has missing values inside {w}")
    return Inputs(y, Xi, Xm, Z, tuple(di), tuple(dm))


# ---------------------------------------------------------------------------
# output helpers

def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_cell(v) for v in r])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "" if not np.isfinite(v) else repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _versions():
    import matplotlib
    import numba
    import scipy
    from importlib.metadata import PackageNotFoundError, version
    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__,
            "matplotlib": matplotlib.__version__, "proxyrecon": pkg}


def _manifest(cfg: RunConfig, outdir: Path, wall):
    lines = [f"command: {cfg.command}", f"argv: {' '.join(cfg.argv)}", f"seed: {cfg.seed}"]
    lines += [f"version.{k}: {v}" for k, v in _versions().items()]
    for sec, kv in cfg.settings.items():
        lines += [f"config.{sec}.{k}: {v}" for k, v in kv.items()]
    lines.append(f"wall_seconds: {wall:.3f}")
    (outdir / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _specs(cfg):
    hyper = dict(cv_reps=cfg.int("run", "cv_reps"), cv_folds=cfg.int("run", "cv_folds"),
                 grid_size=cfg.int("run", "grid_size"))
    return [modelzoo.ModelSpec.parse(s, **hyper) for s in cfg.names("run", "models")], hyper


def _scheme(cfg, total):
    try:
        return harness.BlockScheme(cfg.int("run", "block_len"), cfg.get("run", "scoring"), total)
    except DataError as exc:
        raise ConfigError(str(exc)) from exc


def _null_class(cfg, label, X: ProxyMatrix, w):
    if label == "empirical":
        return nullmodels.PseudoProxyClass.from_proxies(X, w)
    return nullmodels.PseudoProxyClass.parse(label)


def _bayes_cfg(cfg):
    return bayes.BayesConfig(n_pcs=cfg.int("bayes", "n_pcs"), iters=cfg.int("bayes", "iters"),
                             burnin=cfg.int("bayes", "burnin"), thin=cfg.int("bayes", "thin"),
                             chains=cfg.int("bayes", "chains"), seed=cfg.seed)


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(cfg, out):
    d = load_inputs(cfg)
    w = cfg.window()
    summary = {
        "temperature": {"first_year": d.y.start_year, "last_year": d.y.end_year,
                        "missing": int(d.y.missing.sum()),
                        "lag1_autocorrelation": nullmodels.fit_ar1(d.y.window(w))},
        "instrumental_set": {"window": str(w), "columns": d.X_inst.n_cols,
                             "dropped_incomplete": len(d.dropped_inst)},
        "millennial_set": {"window": cfg.get("run", "millennial"), "columns": d.X_mill.n_cols,
                           "dropped_incomplete": len(d.dropped_mill)},
        "local": None if d.Z is None else {"columns": d.Z.n_cols},
    }
    _write_json(out / "summary.json", summary)
    from . import plots
    plots.lines(d.y.years, {}, out / "temperature.svg", ylabel="anomaly",
                obs=(d.y.years, d.y.values))


def cmd_cv(cfg, out):
    d = load_inputs(cfg)
    w = cfg.window()
    specs, hyper = _specs(cfg)
    scheme = _scheme(cfg, len(w))
    results = []
    for sp in specs:
        log.info("block CV: %s", sp.label)
        results.append(harness.run_block_cv(sp, d.y, d.X_inst, d.Z, scheme, cfg.seed, w,
                                            cfg.workers))
    _write_csv(out / "blocks.csv", ["spec", "block_start", "rmse"],
               [(r.spec.label, s, v) for r in results for s, v in r.per_block])
    summary = {"window": str(w), "block_len": scheme.block_len, "scoring": scheme.scoring,
               "models": [r.summary() for r in results], "win_fractions": {}}
    for a in results:
        for b in results:
            if a is not b:
                c = harness.compare(a, b)
                summary["win_fractions"][f"{a.spec.label}>{b.spec.label}"] = {
                    "wins": c.wins, "ties": c.ties, "losses": c.losses, "fraction": c.fraction}
    if cfg.get("run", "null") and specs:
        label = cfg.get("run", "null")
        cls = _null_class(cfg, label, d.X_inst, w)
        env = harness.pseudo_envelope(specs[0], cls, d.y, scheme, n_series=d.X_inst.n_cols,
                                      reps=cfg.int("run", "reps"), seed=cfg.seed, window=w,
                                      Z=d.Z, workers=cfg.workers)
        _write_csv(out / "envelope.csv", ["block_start", "mean", "lo", "hi"],
                   [tuple(r.values()) for r in env.rows()])
        summary["envelope"] = {"null": label, "spec": specs[0].label,
                               "reps": cfg.int("run", "reps")}
    _write_json(out / "summary.json", summary)
    from . import plots
    plots.boxplot({r.spec.label: r.rmse for r in results}, out / "rmse_boxplot.svg")
    plots.lines(results[0].block_starts, {r.spec.label: r.rmse for r in results},
                out / "rmse_by_block.svg", xlabel="first year of holdout block", ylabel="RMSE")


def cmd_null_bench(cfg, out):
    reps = cfg.int("run", "reps")
    rw = nullmodels.spurious_corr_experiment(149, max(reps, 1000), cfg.seed, "brownian")
    wn = nullmodels.spurious_corr_experiment(149, max(reps, 1000), cfg.seed + 1, "white")
    _write_csv(out / "spurious.csv", ["rep", "random_walk", "white_noise"],
               [(i, a, b) for i, (a, b) in enumerate(zip(rw, wn))])
    summary = {"n": 149, "reps": int(rw.size), "sd_random_walk": float(rw.std(ddof=1)),
               "sd_white_noise": float(wn.std(ddof=1)), "reference_sd": 1 / np.sqrt(148)}
    _write_json(out / "summary.json", summary)
    from . import plots
    plots.histogram({"random walk": rw, "white noise": wn}, out / "spurious.svg")


def cmd_zoo_backcast(cfg, out):
    d = load_inputs(cfg)
    w = cfg.window()
    _, hyper = _specs(cfg)
    wm = cfg.window("millennial")
    X = d.X_mill
    span = AnalysisWindow(X.start_year, X.end_year)
    Z = d.Z
    rows = []
    curves = {}
    skipped = []
    for sp in modelzoo.zoo_ensemble_specs(**hyper):
        if sp.needs_local and Z is None:
            skipped.append(sp.label)
            continue
        try:
            m = modelzoo.fit(sp, d.y, X, Z, window=w, seed=cfg.seed)
            bc = modelzoo.backcast(m, X, span)
        except (DataError, NumericalError) as exc:
            log.warning("%s skipped: %s", sp.label, exc)
            skipped.append(sp.label)
            continue
        curves[sp.label] = bc.values
        rows += [(sp.label, int(yr), v) for yr, v in zip(bc.years, bc.values)]
    _write_csv(out / "backcast.csv", ["model", "year", "value"], rows)
    _write_json(out / "summary.json", {"models": list(curves), "skipped": skipped,
                                       "span": str(span), "fit_window": str(w)})
    from . import plots
    yy = d.y.window(AnalysisWindow(w.first_year, min(d.y.end_year, wm.last_year)))
    plots.lines(span.years, curves, out / "backcast.svg", ylabel="anomaly",
                obs=(yy.years, yy.values))


def _bayes_setup(cfg):
    d = load_inputs(cfg)
    bc = _bayes_cfg(cfg)
    pcs = bayes.pc_scores(d.X_mill, bc.n_pcs)
    last = pcs.end_year
    anchors = tuple(d.y.at([last + 1, last + 2]))
    w = cfg.window()
    train = np.arange(w.first_year, min(w.last_year, d.y.end_year - 2) + 1)
    return d, bc, pcs, anchors, train


def _fit_draws(cfg, out):
    d, bc, pcs, anchors, train = _bayes_setup(cfg)
    draws = bayes.gibbs_sample(pcs, d.y, bc, train_years=train, workers=cfg.workers)
    return d, bc, pcs, anchors, draws


def cmd_bayes_fit(cfg, out):
    d, bc, pcs, anchors, draws = _fit_draws(cfg, out)
    _write_csv(out / "draws.csv", ["chain", *draws.names, "sigma"],
               [(int(c), *b, s) for c, b, s in zip(draws.chain, draws.beta, draws.sigma)])
    _write_json(out / "diagnostics.json", {
        "draws": draws.n_draws, "flagged": draws.flagged, "parameters": draws.diagnostics(),
        "posterior_mean": dict(zip(draws.names, draws.beta_mean)),
        "sigma_max": float(draws.sigma.max()), "sigma_upper": bc.sigma_upper})


def _ensembles(cfg):
    d, bc, pcs, anchors, draws = _fit_draws(cfg, None)
    ens = {m: bayes.backcast_paths(draws, pcs, anchors, m, seed=cfg.seed) for m in bayes.MODES}
    return d, draws, pcs, anchors, ens


def cmd_bayes_backcast(cfg, out):
    d, draws, pcs, anchors, ens = _ensembles(cfg)
    mean = bayes.backcast_mean(draws, pcs, anchors)
    rows = []
    bands = {}
    for mode, e in ens.items():
        lo, hi = bayes.credible_bands(e)
        bands[mode] = (lo, hi)
    _write_csv(out / "bands.csv",
               ["year", "mean"] + [f"{m}_{s}" for m in bayes.MODES for s in ("lo", "hi")],
               [(int(yr), mean.values[i], *[bands[m][j][i] for m in bayes.MODES for j in (0, 1)])
                for i, yr in enumerate(mean.years)])
    for mode, e in ens.items():
        v = e.paths.var(axis=0, ddof=1)
        rows += [(mode, int(yr), e.paths[:, i].mean(), v[i]) for i, yr in enumerate(e.years)]
    _write_csv(out / "paths_summary.csv", ["mode", "year", "path_mean", "path_var"], rows)
    from . import plots
    w = cfg.window()
    yy = d.y.window(AnalysisWindow(w.first_year, min(d.y.end_year, pcs.end_year)))
    plots.lines(mean.years, {"posterior mean backcast": mean.values}, out / "backcast.svg",
                ylabel="anomaly", band=bands["full"], obs=(yy.years, yy.values))
    plots.lines(mean.years, {m: ens[m].paths.var(axis=0) for m in bayes.MODES},
                out / "variance.svg", ylabel="path variance")


def cmd_events(cfg, out):
    d, draws, pcs, anchors, ens = _ensembles(cfg)
    w = cfg.window()
    try:
        dec = AnalysisWindow.parse(cfg.get("run", "event_decade"))
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    spec = bayes.EventSpec(year=cfg.int("run", "event_year"),
                           decade=(dec.first_year, dec.last_year), pre_end=w.first_year - 1)
    obs = d.y.window(AnalysisWindow(w.first_year, d.y.end_year))
    probs = bayes.event_probabilities(ens["full"], obs, spec)
    _write_json(out / "events.json", {"probabilities": probs, "paths": ens["full"].n_paths,
                                      "event_year": spec.year, "event_decade": list(spec.decade),
                                      "compared_span": f"{pcs.start_year}-{spec.pre_end}"})


def cmd_bayes_validate(cfg, out):
    d = load_inputs(cfg)
    bc = _bayes_cfg(cfg)
    w = cfg.window()
    labels = (cfg.get("run", "null"),) if cfg.get("run", "null") else NULLS
    classes = [_null_class(cfg, lb, d.X_mill, w) for lb in labels]
    Xv = d.X_mill
    rows = []
    for blk in ("first30", "last30"):
        score, pv, _ = bayes.holdout_validate(bc, d.y, Xv, blk, classes,
                                              null_reps=cfg.int("run", "reps"), seed=cfg.seed,
                                              window=w, block_len=cfg.int("run", "block_len"),
                                              workers=cfg.workers)
        rows += [(blk, score, k, v) for k, v in pv.items()]
    _write_csv(out / "validation.csv", ["block", "rmse", "null", "pvalue"], rows)


def cmd_report(cfg, out):
    root = cfg.out
    missing = [f"{sub}/{name}" for sub, name in REPORT_INPUTS.items()
               if not (root / sub / name).is_file()]
    if missing:
        raise DataError("missing upstream artifacts: " + ", ".join(missing))
    parts = ["# Reconstruction report", ""]
    for sub, name in REPORT_INPUTS.items():
        p = root / sub / name
        parts += [f"## {sub}", "", "```", p.read_text(encoding="utf-8").strip()
                  if p.suffix == ".json" else _head(p), "```", ""]
    (out / "report.md").write_text("\n".join(parts), encoding="utf-8")


def _head(p, n=12):
    lines = p.read_text(encoding="utf-8").splitlines()
    extra = [f"... ({len(lines) - n} more rows)"] if len(lines) > n else []
    return "\n".join(lines[:n] + extra)


COMMANDS = {"ingest": cmd_ingest, "cv": cmd_cv, "null-bench": cmd_null_bench,
            "zoo-backcast": cmd_zoo_backcast, "bayes-fit": cmd_bayes_fit,
            "bayes-backcast": cmd_bayes_backcast, "bayes-validate": cmd_bayes_validate,
            "events": cmd_events, "report": cmd_report}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    t0 = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        cfg.argv = argv
        out = cfg.out / cfg.command
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[cfg.command](cfg, out)
        _manifest(cfg, out, time.perf_counter() - t0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ProxyReconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
