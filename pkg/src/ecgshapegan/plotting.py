"""SVG overlay of synthetic beats over per-cluster shape-model bands."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .preprocess import CLASS_SYMBOLS, BeatDataset
from .shape_model import ShapeModelSet


def _cluster_band(model) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(time, amplitude mean, pointwise amplitude std of the model)."""
    t_len = model.mean.size // 2
    time = model.mean[:t_len]
    amp = model.mean[t_len:]
    var = (model.eigvals[:, None] * model.eigvecs[:, t_len:] ** 2).sum(axis=0)
    return time, amp, np.sqrt(var)


def plot_overlay(beats: BeatDataset, model_set: ShapeModelSet, svg_path, csv_path=None) -> None:
    labels = sorted(set(beats.labels().tolist()) & set(model_set.class_labels))
    fig, axes = plt.subplots(1, max(1, len(labels)), figsize=(5 * max(1, len(labels)), 4))
    if len(labels) <= 1:
        axes = [axes]
    csv_rows = ["kind,class,cluster,index,time,amp,amp_lo,amp_hi"]
    for ax, c in zip(axes, labels):
        symbol = CLASS_SYMBOLS[c]
        for k, model in enumerate(model_set.models[c]):
            time, amp, std = _cluster_band(model)
            lo, hi = amp - 2 * std, amp + 2 * std
            ax.fill_between(time, lo, hi, alpha=0.25, label=f"cluster {k}")
            for i in range(time.size):
                csv_rows.append(
                    f"band,{symbol},{k},{i},{time[i]!r},{amp[i]!r},{lo[i]!r},{hi[i]!r}"
                )
        for bi, beat in enumerate(b for b in beats.beats if b.label == c):
            ax.plot(beat.shape[0], beat.shape[1], lw=0.6, color="green", alpha=0.7)
            for i in range(beat.shape.shape[1]):
                csv_rows.append(
                    f"beat,{symbol},-1,{i},{beat.shape[0][i]!r},{beat.shape[1][i]!r},,"
                )
        ax.set_title(f"class {symbol}")
        ax.set_xlabel("normalized time")
        ax.legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)
    if csv_path:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(csv_rows) + "\n")
