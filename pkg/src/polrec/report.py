"""Figure rendering for experiment outputs (PNG files next to the CSVs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_learning_curves(curves: dict, path, ylabel: str = "mean EMD",
                           provenance: str | None = None) -> None:
    """One learning-curve panel: mean line plus a one-standard-deviation band
    per model.  ``curves`` maps a label to (sweeps, mean, std)."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for label, (sweeps, mean, std) in curves.items():
        sweeps = np.asarray(sweeps)
        mean = np.asarray(mean)
        std = np.asarray(std)
        (line,) = ax.plot(sweeps, mean, label=label, lw=1.5)
        ax.fill_between(sweeps, mean - std, mean + std,
                        color=line.get_color(), alpha=0.18, lw=0)
    ax.set_xlabel("Gibbs sweep")
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False, fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path, provenance)


def render_cluster_histograms(hists: dict, path, true_value: int | None = None,
                              provenance: str | None = None) -> None:
    """Posterior bar charts of the active-cluster count, one panel per
    nonparametric model."""
    n = len(hists)
    fig, axes = plt.subplots(1, n, figsize=(4.0 * n, 3.2), squeeze=False)
    for ax, (label, counts) in zip(axes[0], hists.items()):
        ks = sorted(counts)
        total = sum(counts.values())
        ax.bar(ks, [counts[k] / total for k in ks], color="tab:blue")
        if true_value is not None:
            ax.axvline(true_value, color="tab:red", ls="--", lw=1)
        ax.set_xlabel("active clusters")
        ax.set_ylabel("posterior frequency")
        ax.set_title(label, fontsize=10)
    fig.tight_layout()
    _save(fig, path, provenance)


def _save(fig, path, provenance):
    metadata = {"Description": provenance} if provenance else None
    fig.savefig(path, dpi=150, metadata=metadata)
    plt.close(fig)
