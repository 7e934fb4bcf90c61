"""Report figures rendered to image files (no display needed)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import CorrelationMatrix, EvalReport  # noqa: E402


def correlation_heatmap(matrix: CorrelationMatrix, path: str | Path, title: str = "Metric correlations") -> Path:
    k = len(matrix.columns)
    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * k, 0.8 + 0.7 * k))
    shown = np.ma.masked_invalid(matrix.values)
    im = ax.imshow(shown, cmap="coolwarm", vmin=-1, vmax=1)
    ax.set_xticks(range(k), matrix.columns, rotation=45, ha="right")
    ax.set_yticks(range(k), matrix.columns)
    for i in range(k):
        for j in range(k):
            v = matrix.values[i, j]
            ax.text(j, i, "NA" if np.isnan(v) else f"{v:.2f}", ha="center", va="center", fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def tradeoff_plot(reports: Sequence[EvalReport], path: str | Path, content: str = "mask_bleu") -> Path:
    """Style accuracy against a content-preservation column, one point per system."""
    labels = {"mask_bleu": "MaskBLEU", "bleu": "BLEU", "mask_sim": "MaskSim", "sim": "Sim"}
    xs = [r.acc for r in reports]
    ys = [getattr(r, content) for r in reports]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.scatter(xs, ys, s=18)
    for r, x, y in zip(reports, xs, ys):
        ax.annotate(r.name, (x, y), fontsize=6, xytext=(3, 2), textcoords="offset points")
    ax.set_xlabel("Acc")
    ax.set_ylabel(labels.get(content, content))
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
