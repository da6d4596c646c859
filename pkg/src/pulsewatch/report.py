"""Figure rendering for the report bundle (headless, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .features import FEATURE_NAMES

HEATMAP_CLIM = 4.0


def render_heatmap_grid(heatmaps: dict, path) -> None:
    """Per-feature z-score heatmaps (seizures x time around onset)."""
    names = [n for n in FEATURE_NAMES if n in heatmaps]
    n_cols = 3
    n_rows = int(np.ceil(len(names) / n_cols))
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(4.2 * n_cols, 2.6 * n_rows),
                             squeeze=False)
    im = None
    for k, name in enumerate(names):
        ax = axes[k // n_cols][k % n_cols]
        matrix, _labels = heatmaps[name]
        if matrix.size:
            im = ax.imshow(matrix, aspect="auto", cmap="viridis",
                           vmin=-HEATMAP_CLIM, vmax=HEATMAP_CLIM,
                           extent=[-5, 5, matrix.shape[0], 0])
            ax.axvline(0.0, color="k", lw=1)
        ax.set_title(f"z_{name}", fontsize=10)
        ax.set_xlabel("minutes from onset", fontsize=8)
        ax.set_ylabel("seizure", fontsize=8)
        ax.tick_params(labelsize=7)
    for k in range(len(names), n_rows * n_cols):
        axes[k // n_cols][k % n_cols].axis("off")
    if im is not None:
        fig.colorbar(im, ax=axes, shrink=0.6, label="z-score")
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_segmentation(proc, path, span_s: float = 20.0) -> None:
    """First seconds of PPG with detected troughs and systolic peaks marked."""
    rec = proc.recording
    fs = rec.ppg.sample_rate
    n = min(len(rec.ppg.samples), int(span_s * fs))
    t = rec.ppg.start_time + np.arange(n) / fs
    fig, ax = plt.subplots(figsize=(10, 3))
    ax.plot(t, rec.ppg.samples[:n], lw=0.8, color="tab:blue")
    t_end = t[-1]
    troughs = [p.trough_time for p in proc.pulses if p.trough_time <= t_end]
    peaks = [(p.systolic_peak_time, p.systolic_peak_value)
             for p in proc.pulses if p.systolic_peak_time <= t_end]
    vals = np.interp(troughs, t, rec.ppg.samples[:n])
    ax.plot(troughs, vals, "v", color="tab:red", ms=5, label="trough")
    if peaks:
        px, py = zip(*peaks)
        ax.plot(px, py, "^", color="tab:green", ms=5, label="systolic peak")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("PPG")
    ax.set_title(f"segmentation: {rec.subject_id}")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_loss_curve(losses, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(np.arange(1, len(losses) + 1), losses, marker="o", ms=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("weighted BCE")
    ax.set_title("detector training loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
