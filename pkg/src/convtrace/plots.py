"""Matplotlib renderings of experiment results, written to files.

The report pipeline saves these next to the delimited outputs; nothing
here opens a window (Agg backend).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .em import KernelEstimate
from .harness import ResultsTable


def save_accuracy_heatmap(table: ResultsTable, path: str | Path) -> None:
    """Classifier x kernel-size grid of mean accuracies."""
    rows = table.classifiers
    cols = table.kernel_sizes
    acc = np.array([[table.cells[(r, n)].mean_accuracy for n in cols] for r in rows])
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(cols), 1.0 + 0.5 * len(rows)))
    im = ax.imshow(acc, cmap="viridis", aspect="auto",
                   vmin=max(0.0, acc.min() - 2.0), vmax=100.0)
    ax.set_xticks(range(len(cols)), [f"{n}x{n}" for n in cols])
    ax.set_yticks(range(len(rows)), rows)
    ax.set_xlabel("Kernel size")
    for i in range(len(rows)):
        for j in range(len(cols)):
            ax.text(j, i, f"{acc[i, j]:.1f}", ha="center", va="center",
                    color="white" if acc[i, j] < acc.mean() else "black", fontsize=9)
    fig.colorbar(im, ax=ax, label="Accuracy (%)")
    ax.set_title("Mean accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_accuracy_bars(table: ResultsTable, path: str | Path) -> None:
    """Grouped bars per classifier, one group per kernel size."""
    rows = table.classifiers
    cols = table.kernel_sizes
    width = 0.8 / max(len(rows), 1)
    fig, ax = plt.subplots(figsize=(2.0 + 1.4 * len(cols), 4.0))
    xs = np.arange(len(cols))
    for i, name in enumerate(rows):
        means = [table.cells[(name, n)].mean_accuracy for n in cols]
        stds = [table.cells[(name, n)].std_accuracy for n in cols]
        ax.bar(xs + i * width, means, width=width, yerr=stds, capsize=2, label=name)
    ax.set_xticks(xs + width * (len(rows) - 1) / 2, [f"{n}x{n}" for n in cols])
    ax.set_ylabel("Accuracy (%)")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8)
    ax.set_title("Accuracy by classifier and kernel size")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_kernel_heatmap(estimate: KernelEstimate, path: str | Path,
                        title: str = "Estimated kernel") -> None:
    """Kernel weights laid out on the N x N window (anchor shown as 0)."""
    n = estimate.kernel_size
    grid = np.zeros((n, n))
    if n % 2 == 1:
        lo = -(n - 1) // 2
    else:
        lo = -n // 2
    idx = 0
    for t in range(lo, lo + n):
        for s in range(lo, lo + n):
            if (s, t) == (0, 0):
                continue
            grid[t - lo, s - lo] = estimate.weights[idx]
            idx += 1
    bound = max(float(np.max(np.abs(grid))), 1e-12)
    fig, ax = plt.subplots(figsize=(4, 4))
    im = ax.imshow(grid, cmap="RdBu_r", vmin=-bound, vmax=bound)
    ax.plot(-lo, -lo, "ko", markersize=6)
    ax.set_xticks(range(n), range(lo, lo + n))
    ax.set_yticks(range(n), range(lo, lo + n))
    ax.set_xlabel("s")
    ax.set_ylabel("t")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
