"""Evaluation suite for real-vs-synthetic beat sets.

RMSE/MAE/MSE use nearest-real matching (each fake beat paired with its
closest real beat in Euclidean distance); EMD is the 1-D Wasserstein-1
distance between the pooled amplitude-value distributions; DTW runs on the
amplitude channel of the matched pairs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dtw import dtw_distance
from .errors import EmptySet
from .preprocess import CLASS_SYMBOLS, BeatDataset

METRIC_NAMES = ("rmse", "mae", "mse", "emd", "dtw")


@dataclass
class ClassMetrics:
    rmse: float
    mae: float
    mse: float
    emd: float
    dtw: float
    n_real: int
    n_fake: int


@dataclass
class MetricsReport:
    per_class: dict[int, ClassMetrics]
    pairing: str = "nearest-real"


def emd_1d(a, b) -> float:
    """Wasserstein-1 between empirical distributions (integral of |CDF diff|)."""
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if a.size == 0 or b.size == 0:
        raise EmptySet("emd_1d needs non-empty multisets")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    grid = np.concatenate([a, b])
    grid.sort()
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b)[:-1] * np.diff(grid)))


def _nearest_real_pairs(real: np.ndarray, fake: np.ndarray) -> np.ndarray:
    """Index of the closest real row for each fake row."""
    d2 = ((fake[:, None, :] - real[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def paired_errors(real: np.ndarray, fake: np.ndarray, pairing: str = "nearest-real"):
    """(rmse, mae, mse) over matched coordinate pairs."""
    if real.size == 0 or fake.size == 0:
        raise EmptySet("paired_errors needs non-empty sets")
    if pairing == "nearest-real":
        matched = real[_nearest_real_pairs(real, fake)]
        diff = fake - matched
    elif pairing == "mean-vs-mean":
        diff = fake.mean(axis=0) - real.mean(axis=0)
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    mse = float(np.mean(diff**2))
    mae = float(np.mean(np.abs(diff)))
    return float(np.sqrt(mse)), mae, mse


def evaluate_sets(real_set: BeatDataset, fake_set: BeatDataset,
                  pairing: str = "nearest-real") -> MetricsReport:
    """Per-class RMSE/MAE/MSE/EMD/DTW between a real and a synthetic set."""
    real_labels = real_set.labels()
    fake_labels = fake_set.labels()
    per_class: dict[int, ClassMetrics] = {}
    for c in sorted(set(fake_labels.tolist())):
        real_idx = np.flatnonzero(real_labels == c)
        fake_idx = np.flatnonzero(fake_labels == c)
        if real_idx.size == 0 or fake_idx.size == 0:
            raise EmptySet(f"class {CLASS_SYMBOLS[c]} empty in one set")
        real_m = np.stack([real_set.beats[i].shape.reshape(-1) for i in real_idx])
        fake_m = np.stack([fake_set.beats[i].shape.reshape(-1) for i in fake_idx])
        rmse, mae, mse = paired_errors(real_m, fake_m, pairing=pairing)
        real_amp = np.stack([real_set.beats[i].shape[1] for i in real_idx])
        fake_amp = np.stack([fake_set.beats[i].shape[1] for i in fake_idx])
        emd = emd_1d(real_amp.reshape(-1), fake_amp.reshape(-1))
        match = _nearest_real_pairs(real_m, fake_m)  # DTW always pairs beats
        dtw = float(
            np.mean([dtw_distance(fake_amp[i], real_amp[match[i]]) for i in range(len(fake_idx))])
        )
        per_class[c] = ClassMetrics(
            rmse=rmse, mae=mae, mse=mse, emd=emd, dtw=dtw,
            n_real=int(real_idx.size), n_fake=int(fake_idx.size),
        )
    return MetricsReport(per_class=per_class, pairing=pairing)


def report_to_csv(report: MetricsReport) -> str:
    lines = [f"# pairing={report.pairing}", "class,metric,value,n_real,n_fake"]
    for c in sorted(report.per_class):
        m = report.per_class[c]
        for name in METRIC_NAMES:
            lines.append(f"{CLASS_SYMBOLS[c]},{name},{getattr(m, name)!r},{m.n_real},{m.n_fake}")
    return "\n".join(lines) + "\n"


def report_to_json(report: MetricsReport) -> str:
    payload = {
        "pairing": report.pairing,
        "classes": {
            CLASS_SYMBOLS[c]: {
                **{name: getattr(m, name) for name in METRIC_NAMES},
                "n_real": m.n_real,
                "n_fake": m.n_fake,
            }
            for c, m in report.per_class.items()
        },
    }
    return json.dumps(payload, sort_keys=True)
