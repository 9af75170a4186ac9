"""Matplotlib figure rendering for benchmark reports and training logs.

Each helper writes one PNG next to the delimited output it illustrates.  The
Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_improvement_figure",
    "save_extrapolation_figure",
    "save_timing_figure",
    "save_history_figure",
]


def save_improvement_figure(results, path: str) -> None:
    """Cold vs warm iteration counts, one dot per instance, with the diagonal."""
    pairs = [
        (r.cold_result.iterations, r.warm_result.iterations)
        for r in results
        if r.cold_result is not None
    ]
    if not pairs:
        return
    cold, warm = zip(*pairs)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(cold, warm, s=18, alpha=0.8)
    lim = max(max(cold), max(warm)) * 1.05
    ax.plot([0, lim], [0, lim], ls="--", lw=1, color="gray", label="no change")
    ax.set_xlim(0, lim)
    ax.set_ylim(0, lim)
    ax.set_xlabel("cold-start iterations")
    ax.set_ylabel("warm-start iterations")
    ax.set_title("Warm-start effect per instance")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_extrapolation_figure(rows_by_instance: dict, path: str) -> None:
    """Start-point distance vs iterations across the alpha grid."""
    fig, ax = plt.subplots(figsize=(5, 4))
    all_d, all_it = [], []
    for name, rows in rows_by_instance.items():
        d = [r.start_distance for r in rows]
        it = [r.iterations for r in rows]
        ax.plot(d, it, "o-", ms=4, lw=0.8, alpha=0.7, label=name)
        all_d.extend(d)
        all_it.extend(it)
    if len(all_d) >= 2 and max(all_d) > min(all_d):
        coef = np.polyfit(all_d, all_it, 1)
        grid = np.linspace(min(all_d), max(all_d), 50)
        ax.plot(grid, np.polyval(coef, grid), color="goldenrod", lw=2, label="trend")
    ax.set_xlabel("start distance from reference solution")
    ax.set_ylabel("iterations to converge")
    ax.set_title("Warm-start quality vs solve effort")
    if len(rows_by_instance) <= 8:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_timing_figure(rows, path: str) -> None:
    """Inference/solve time ratio against instance size."""
    rows = [r for r in rows if np.isfinite(r.ratio)]
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([r.size for r in rows], [r.ratio for r in rows], "o-")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("variables")
    ax.set_ylabel("inference / solve time")
    ax.set_title("Prediction overhead vs problem size")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_history_figure(history, path: str) -> None:
    """Training and validation loss per epoch with the selected checkpoint."""
    fig, ax = plt.subplots(figsize=(5, 4))
    epochs = np.arange(len(history.train_loss))
    ax.plot(epochs, history.train_loss, label="train loss")
    ax.plot(epochs, history.val_loss, label="validation loss")
    if history.best_epoch >= 0:
        ax.axvline(history.best_epoch, ls="--", lw=1, color="gray", label="best epoch")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean squared error")
    ax.set_title("Training history")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
