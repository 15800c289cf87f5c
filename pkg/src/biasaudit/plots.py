"""Vector-graphics plot emission: heatmaps, quadrant scatters, histograms.

Display normalization never touches stored metric values; heatmaps normalize
a copy per row group for contrast only.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "biasaudit"

import matplotlib.pyplot as plt
import numpy as np

from .rankstats import FAIR_THRESHOLD, GapPoint

KINDS = ("heatmap", "scatter", "histogram")

_QUADRANT_COLORS = {
    "I": "#1f77b4",
    "III": "#1f77b4",
    "II": "#ff7f0e",
    "IV": "#ff7f0e",
    "axis": "#7f7f7f",
}


def normalize_rows_for_display(
    values: np.ndarray, row_groups: Sequence[int] | None = None
) -> np.ndarray:
    """Scale a copy of the matrix to [0, 1] within each row group (default:
    one group per row). Undefined cells (NaN) stay NaN; constant groups map
    to 0.5."""
    out = np.array(values, dtype=np.float64, copy=True)
    if row_groups is None:
        row_groups = list(range(out.shape[0]))
    for group in sorted(set(row_groups)):
        rows = [i for i, g in enumerate(row_groups) if g == group]
        block = out[rows]
        finite = block[np.isfinite(block)]
        if finite.size == 0:
            continue
        lo, hi = finite.min(), finite.max()
        if hi > lo:
            out[rows] = (block - lo) / (hi - lo)
        else:
            out[rows] = np.where(np.isfinite(block), 0.5, block)
    return out


def plot_heatmap(results: Mapping, path: str | Path) -> None:
    values = np.asarray(results["values"], dtype=np.float64)
    row_labels = list(results["rows"])
    col_labels = list(results["cols"])
    if values.shape != (len(row_labels), len(col_labels)):
        raise ValueError("heatmap values do not match row/col labels")
    display = normalize_rows_for_display(values, results.get("row_groups"))
    fig, ax = plt.subplots(
        figsize=(max(4.0, 0.5 * len(col_labels)), max(3.0, 0.5 * len(row_labels)))
    )
    masked = np.ma.masked_invalid(display)
    cmap = plt.get_cmap("Greys").copy()
    cmap.set_bad("#f2d7d5")
    im = ax.imshow(masked, cmap=cmap, vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(col_labels)), col_labels, rotation=90, fontsize=7)
    ax.set_yticks(range(len(row_labels)), row_labels, fontsize=7)
    fig.colorbar(im, ax=ax, label="bias (normalized per row group)")
    ax.set_title(results.get("title", "bias levels"))
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def plot_scatter(results: Mapping, path: str | Path) -> None:
    points = results["points"]
    if not points:
        raise ValueError("no gap points to plot")
    fig, ax = plt.subplots(figsize=(5, 5))
    for pt in points:
        if isinstance(pt, GapPoint):
            x, y, quadrant = pt.pre_gap, pt.down_gap, pt.quadrant
        else:
            x, y, quadrant = pt["pre_gap"], pt["down_gap"], pt["quadrant"]
        ax.scatter(x, y, color=_QUADRANT_COLORS.get(quadrant, "#7f7f7f"), s=24)
    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.axvline(0.0, color="black", linewidth=0.6)
    ax.set_xlabel(results.get("x_label", "pre-training gap"))
    ax.set_ylabel(results.get("y_label", "downstream gap"))
    ax.set_title(results.get("title", "performance gaps"))
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def plot_histogram(results: Mapping, path: str | Path) -> None:
    values = np.asarray(results["values"], dtype=np.float64)
    if values.size == 0:
        raise ValueError("no values to plot")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(values, bins=results.get("bins", 20), color="#1f77b4", alpha=0.8)
    threshold = results.get("threshold", FAIR_THRESHOLD)
    if threshold is not None:
        ax.axvline(threshold, color="red", linewidth=1.0, linestyle="--")
    ax.set_xlabel(results.get("x_label", "value"))
    ax.set_ylabel("count")
    ax.set_title(results.get("title", "distribution"))
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def emit_plot(results: Mapping, kind: str, path: str | Path) -> None:
    """Write a self-contained vector plot of the given kind."""
    if kind == "heatmap":
        plot_heatmap(results, path)
    elif kind == "scatter":
        plot_scatter(results, path)
    elif kind == "histogram":
        plot_histogram(results, path)
    else:
        raise ValueError(f"plot kind must be one of {KINDS}, got {kind!r}")
