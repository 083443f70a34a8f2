"""Figure rendering for simulation and sweep reports (files only, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    # no version stamp, so the bytes do not change with the matplotlib release
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_heatmap(grid: np.ndarray, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4, 4 * grid.shape[0] / max(grid.shape[1], 1) + 0.6))
    total = grid.sum()
    im = ax.imshow(grid / total if total > 0 else grid, cmap="viridis", origin="upper")
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="occupancy")
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_episode_metric(values: np.ndarray, path, label: str) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(np.arange(len(values)), values, color="0.4")
    ax.set_xlabel("episode")
    ax.set_ylabel(label)
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep(values, means, sems, path, parameter: str, metric: str) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(values, means, yerr=sems, marker="o", capsize=3, color="k")
    ax.set_xlabel(parameter)
    ax.set_ylabel(metric)
    fig.tight_layout()
    return _save(fig, path)


def plot_angle_histogram(counts: np.ndarray, bins: np.ndarray, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    centers = np.degrees(0.5 * (bins[1:] + bins[:-1]))
    total = counts.sum()
    ax.bar(centers, counts / total if total else counts, width=np.degrees(bins[1] - bins[0]), color="0.4")
    ax.set_xlabel("pole angle (deg)")
    ax.set_ylabel("fraction of steps")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
