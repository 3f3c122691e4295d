"""Matplotlib figure rendering for the report path.

Figures accompany the CSV outputs: histograms of standardized estimates with
the standard normal density, Q-Q plots against the normal quantiles, and
RMSE-versus-k curves for the stability studies.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["histogram_png", "qq_png", "rmse_png"]


def histogram_png(samples, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(np.asarray(samples), bins=60, density=True, color="#4878a8", alpha=0.8)
    grid = np.linspace(-4, 4, 200)
    ax.plot(grid, np.exp(-grid**2 / 2) / math.sqrt(2 * math.pi), "k-", lw=1.2)
    ax.set_xlabel("standardized estimate")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def qq_png(qq_points, path, title: str = "") -> None:
    pts = np.asarray(qq_points)
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(pts[:, 0], pts[:, 1], "o", ms=2.5, color="#4878a8")
    lo = min(pts[:, 0].min(), pts[:, 1].min())
    hi = max(pts[:, 0].max(), pts[:, 1].max())
    ax.plot([lo, hi], [lo, hi], "k--", lw=1)
    ax.set_xlabel("theoretical quantile")
    ax.set_ylabel("sample quantile")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def rmse_png(curves: dict, path, title: str = "") -> None:
    """curves: label -> {x: rmse} mapping (x is k or a multiplier)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, series in curves.items():
        xs = sorted(series)
        ax.plot(xs, [series[x] for x in xs], "o-", label=str(label))
    ax.set_xlabel("k / multiplier")
    ax.set_ylabel("RMSE")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
