"""Figures for the CLI report path. Everything renders headless to PNG."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METRIC_KEYS = ("A", "U", "Uk", "R", "acc")


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_scatter(
    features: np.ndarray,
    labels: np.ndarray,
    path: str | Path,
    targets: np.ndarray | None = None,
    centers: np.ndarray | None = None,
    title: str = "",
) -> Path:
    """2-d features on the unit circle, one colour per class.

    ``targets`` and ``centers`` are indexed by class.
    """
    fig, ax = plt.subplots(figsize=(5, 5))
    theta = np.linspace(0, 2 * np.pi, 200)
    ax.plot(np.cos(theta), np.sin(theta), color="0.8", lw=0.8, zorder=0)
    cmap = plt.get_cmap("tab10")
    for c in np.unique(labels):
        pts = features[labels == c]
        ax.scatter(pts[:, 0], pts[:, 1], s=8, alpha=0.6, color=cmap(c % 10), label=f"class {c}")
        if targets is not None:
            ax.scatter(*targets[c], marker="*", s=220, color=cmap(c % 10), edgecolor="k", zorder=3)
        if centers is not None:
            ax.scatter(*centers[c], marker="X", s=90, color=cmap(c % 10), edgecolor="k", zorder=3)
    ax.set_aspect("equal")
    ax.set_xlim(-1.15, 1.15)
    ax.set_ylim(-1.15, 1.15)
    ax.legend(loc="upper right", fontsize=7, markerscale=1.5)
    ax.set_title(title or "features (star: target, cross: class center)", fontsize=9)
    return _save(fig, path)


def plot_history(rows: list[dict], path: str | Path) -> Path:
    """Loss per epoch and, once matching starts, the assignment cost."""
    epochs = [r["epoch"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(epochs, [r["loss"] for r in rows], color="C0", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    cost = [(r["epoch"], r["assignment_cost"]) for r in rows if r["assignment_cost"] is not None]
    if cost:
        ax2 = ax.twinx()
        ax2.plot(*zip(*cost), color="C3", label="assignment cost")
        ax2.set_ylabel("assignment cost")
        ax2.legend(loc="upper center", fontsize=8)
    ax.legend(loc="upper right", fontsize=8)
    return _save(fig, path)


def plot_metrics(rows: list[dict], path: str | Path) -> Path:
    """Grouped bars: one group of bars per metric, one bar per frequency group."""
    keys = [k for k in METRIC_KEYS if k in rows[0]]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    width = 0.8 / len(rows)
    x = np.arange(len(keys))
    for i, row in enumerate(rows):
        ax.bar(x + i * width, [row[k] for k in keys], width, label=row["group"])
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(keys)
    ax.legend(fontsize=8)
    ax.set_title(f"metrics (k={rows[0]['k']})", fontsize=9)
    return _save(fig, path)


def plot_ablation(rows: list[dict], param: str, path: str | Path) -> Path:
    """Each metric of the "all" group against the ablated value, mean and std over seeds."""
    rows = [r for r in rows if r["group"] == "all"]
    keys = [k for k in METRIC_KEYS if f"{k}_mean" in rows[0]]
    fig, axes = plt.subplots(1, len(keys), figsize=(2.6 * len(keys), 2.8))
    values = [r["value"] for r in rows]
    for ax, key in zip(np.atleast_1d(axes), keys):
        ax.errorbar(
            range(len(values)), [r[f"{key}_mean"] for r in rows], [r[f"{key}_std"] for r in rows],
            marker="o", capsize=3,
        )
        ax.set_xticks(range(len(values)))
        ax.set_xticklabels([f"{v:g}" for v in values])
        ax.set_xlabel(param)
        ax.set_title(key, fontsize=9)
    return _save(fig, path)
