"""Matplotlib rendering of evaluation figures (written next to the CSVs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_froc(curves: dict, path, fp_range=None, title="FROC") -> None:
    """Render one or more FROC curves (label -> FrocCurve) to a PNG."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for label, curve in curves.items():
        order = np.argsort(curve.fp_per_case, kind="stable")
        ax.plot(curve.fp_per_case[order], curve.sensitivity[order], label=label)
    if fp_range is not None:
        ax.axvspan(fp_range[0], fp_range[1], alpha=0.12, color="gray")
    ax.set_xlabel("false positives per case")
    ax.set_ylabel("per-lesion sensitivity")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_retrieval(rates: dict, path, title="Counterpart retrieval") -> None:
    """Render hit-rate-vs-k curves (label -> list of (k, hit_rate)) to a PNG."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for label, pairs in rates.items():
        ks = [p[0] for p in pairs]
        hr = [p[1] for p in pairs]
        ax.plot(ks, hr, marker="o", label=label)
    ax.set_xlabel("k (neighbors)")
    ax.set_ylabel("hit rate")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_selection(kappa_trajectory, path) -> None:
    """Objective value after each accepted feature."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.plot(range(1, len(kappa_trajectory) + 1), kappa_trajectory, marker="o")
    ax.set_xlabel("selected features")
    ax.set_ylabel("selection objective")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
