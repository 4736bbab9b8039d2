"""Deterministic SVG figures. Presentation only; nothing here feeds back into results."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "proxyrecon", "svg.fonttype": "none", "figure.figsize": (8, 4.5),
       "font.size": 9}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def boxplot(groups: dict, path, ylabel="holdout RMSE"):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        labels = list(groups)
        data = [np.asarray(groups[k])[np.isfinite(groups[k])] for k in labels]
        ax.boxplot(data)
        ax.set_xticks(range(1, len(labels) + 1), labels, rotation=30, ha="right")
        ax.set_ylabel(ylabel)
        fig.tight_layout()
        _save(fig, path)


def lines(x, series: dict, path, xlabel="year", ylabel="", band=None, obs=None):
    """Overlay of named series; ``band`` = (lo, hi) shaded, ``obs`` = (x, y) in black."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        if band is not None:
            ax.fill_between(x, band[0], band[1], color="0.8", lw=0, label="band")
        for name, v in series.items():
            ax.plot(x, v, lw=0.8, label=name)
        if obs is not None:
            ax.plot(obs[0], obs[1], color="k", lw=1.0, label="observed")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(series) <= 12:
            ax.legend(fontsize=6, ncol=2)
        fig.tight_layout()
        _save(fig, path)


def histogram(samples: dict, path, xlabel="correlation", bins=40):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for name, v in samples.items():
            ax.hist(v, bins=bins, range=(-1, 1), alpha=0.5, label=name)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count")
        ax.legend()
        fig.tight_layout()
        _save(fig, path)
