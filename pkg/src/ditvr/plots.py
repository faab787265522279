"""Report figures. Rendered headless (Agg) straight to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricReport

__all__ = ["plot_metric_bars", "plot_per_frame", "plot_vital_layers"]


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_metric_bars(reports: list[MetricReport], metric: str, path: str | Path) -> Path:
    """Mean of one metric per method, individual seeds as dots."""
    attr = metric.lower().replace("we_e3", "we_e3")
    key = {"psnr": "psnr", "ssim": "ssim", "we_e3": "we_e3", "fsim": "fsim"}[attr]
    methods: list[str] = []
    for rep in reports:
        if rep.method not in methods:
            methods.append(rep.method)
    means, points = [], []
    for m in methods:
        vals = [getattr(r, key) for r in reports if r.method == m and np.isfinite(getattr(r, key))]
        means.append(np.mean(vals) if vals else np.nan)
        points.append(vals)
    fig, ax = plt.subplots(figsize=(1.4 + 1.1 * len(methods), 3.4))
    xs = np.arange(len(methods))
    ax.bar(xs, means, color="#7aa6c2", width=0.62)
    for x, vals in zip(xs, points):
        ax.plot(np.full(len(vals), x), vals, "k.", ms=4, alpha=0.6)
    ax.set_xticks(xs)
    ax.set_xticklabels(methods, rotation=20, ha="right")
    ax.set_ylabel(metric)
    ax.set_title(f"{metric} by method")
    ax.grid(axis="y", alpha=0.3)
    return _finish(fig, path)


def plot_per_frame(reports: list[MetricReport], metric: str, path: str | Path) -> Path:
    """Per-frame curves of PSNR or SSIM, one line per (method, seed)."""
    key = metric.upper()
    fig, ax = plt.subplots(figsize=(5.4, 3.4))
    for rep in reports:
        vals = rep.per_frame.get(key)
        if not vals:
            continue
        ax.plot(range(len(vals)), vals, marker=".", label=f"{rep.method} s{rep.seed}")
    ax.set_xlabel("frame")
    ax.set_ylabel(key)
    ax.set_title(f"per-frame {key}")
    ax.grid(alpha=0.3)
    if len(fig.axes[0].lines) <= 12:
        ax.legend(fontsize=7)
    return _finish(fig, path)


def plot_vital_layers(scores: list[float], metric: str, path: str | Path) -> Path:
    """Per-layer sensitivity bars from the vital-layer analysis."""
    fig, ax = plt.subplots(figsize=(1.2 + 0.7 * len(scores), 3.2))
    xs = np.arange(len(scores))
    ax.bar(xs, scores, color="#c27a7a", width=0.6)
    ax.set_xticks(xs)
    ax.set_xlabel("layer")
    ax.set_ylabel(f"{metric} degradation when disabled")
    ax.set_title("layer sensitivity")
    ax.grid(axis="y", alpha=0.3)
    return _finish(fig, path)
