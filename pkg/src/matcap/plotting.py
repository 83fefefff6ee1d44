"""SVG figures for memory curves, learning curves and head weights."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "matcap"


def _save(fig, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_fmc(matrix: pd.DataFrame, vector: pd.DataFrame | None, path: Path | str, title: str = "Fisher memory curve") -> Path:
    """J(i) on a log scale (left) and cumulative sums (right), one line per trial."""
    fig, (ax_j, ax_c) = plt.subplots(1, 2, figsize=(10, 4))
    for label, frame, style in (("matrix", matrix, "-"), ("vector", vector, "--")):
        if frame is None or frame.empty:
            continue
        for trial, rows in frame.groupby("trial"):
            color = f"C{int(trial) % 10}"
            lbl = f"{label} {trial}" if trial == frame["trial"].min() else None
            ax_j.plot(rows["i"], np.clip(rows["J_i"], 1e-300, None), style, color=color, label=lbl)
            ax_c.plot(rows["i"], rows["cumulative"], style, color=color, label=lbl)
    ax_j.set_yscale("log")
    ax_j.set_xlabel("lag i")
    ax_j.set_ylabel("J(i)")
    ax_c.set_xlabel("lag i")
    ax_c.set_ylabel("cumulative J")
    for ax in (ax_j, ax_c):
        ax.grid(alpha=0.3)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=8)
    fig.suptitle(title)
    return _save(fig, path)


def plot_mem_fmc(frame: pd.DataFrame, path: Path | str) -> Path:
    """Cumulative augmented memory curve per trial against the plain capacity."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for trial, rows in frame.groupby("trial"):
        color = f"C{int(trial) % 10}"
        ax.plot(rows["k"], rows["cumulative"], color=color)
        ax.axhline(float(rows["J_tot_base"].iloc[0]), color=color, linestyle=":", linewidth=0.8)
    ax.set_xlabel("lag k")
    ax.set_ylabel("cumulative J'")
    ax.set_title("Memory-augmented capacity (dotted: without memory)")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_learning_curves(curves: Mapping[str, pd.DataFrame], path: Path | str, column: str = "bce") -> Path:
    """Mean line with min/max band for each label; frames come from ``aggregate_curves``."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for index, (label, agg) in enumerate(curves.items()):
        color = f"C{index % 10}"
        ax.plot(agg["iteration"], agg["mean"], color=color, label=f"{label} ({int(agg['runs'].max())} runs)")
        ax.fill_between(agg["iteration"], agg["min"], agg["max"], color=color, alpha=0.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel(column)
    ax.grid(alpha=0.3)
    if curves:
        ax.legend()
    return _save(fig, path)


def plot_weight_heatmaps(diagnostics: pd.DataFrame, path: Path | str) -> Path:
    """Write and read weightings over time, slots on the vertical axis."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, head in zip(axes, ("write", "read")):
        rows = diagnostics[diagnostics["head"] == head]
        if rows.empty:
            ax.set_title(f"{head} head (no data)")
            continue
        grid = rows.pivot(index="slot", columns="step", values="weight").to_numpy()
        ax.imshow(grid, aspect="auto", origin="lower", cmap="gray_r", vmin=0.0, vmax=1.0)
        ax.set_title(f"{head} weights")
        ax.set_xlabel("step")
    axes[0].set_ylabel("slot")
    return _save(fig, path)
