"""Synthetic heartbeat fixtures: Gaussian-bump "QRS" beats with randomized
width, height and latency, plus a smaller T-wave-like bump. Used by the
acceptance tests and the demo script; no real recordings required.
"""
from __future__ import annotations

import numpy as np

from .preprocess import BeatDataset, Heartbeat, LABEL_OF_SYMBOL, T_BEAT

# per class: (qrs height, qrs width frac, latency frac, t-wave height)
CLASS_SHAPES = {
    "N": (1.0, 0.018, 0.47, 0.25),
    "V": (-0.9, 0.060, 0.50, 0.35),
    "F": (0.6, 0.038, 0.48, 0.30),
}


def _beat_amplitude(rng: np.random.Generator, symbol: str, t: np.ndarray) -> np.ndarray:
    height, width, latency, t_height = CLASS_SHAPES[symbol]
    h = height * rng.uniform(0.8, 1.2)
    w = width * rng.uniform(0.75, 1.3)
    c = latency + rng.uniform(-0.03, 0.03)
    qrs = h * np.exp(-((t - c) ** 2) / (2 * w**2))
    tw = t_height * rng.uniform(0.7, 1.2) * np.exp(-((t - c - 0.25) ** 2) / (2 * 0.06**2))
    noise = rng.normal(scale=0.01, size=t.size)
    return qrs + tw + noise


def make_fixture(
    class_counts: dict[str, int], seed: int = 0, t_len: int = T_BEAT
) -> BeatDataset:
    """Labeled synthetic beats, `class_counts` beats per class symbol."""
    rng = np.random.default_rng(seed)
    t = np.arange(t_len, dtype=np.float64) / (t_len - 1)
    beats = []
    for symbol in sorted(class_counts):
        for i in range(class_counts[symbol]):
            amp = _beat_amplitude(rng, symbol, t)
            beats.append(
                Heartbeat(
                    shape=np.vstack([t, amp]),
                    label=LABEL_OF_SYMBOL[symbol],
                    source_record=f"synthetic-{symbol}",
                    r_peak_index=i,
                )
            )
    return BeatDataset(beats=beats)


def make_synthetic_record(
    class_counts: dict[str, int], seed: int = 0, fs: float = 360.0
) -> tuple[np.ndarray, list[tuple[int, str]]]:
    """A continuous single-lead signal with annotated bump peaks.

    Returns (signal, [(r_peak_index, symbol), ...]) for exercising the full
    ingest -> preprocess path on synthetic data.
    """
    rng = np.random.default_rng(seed)
    symbols = [s for s in sorted(class_counts) for _ in range(class_counts[s])]
    rng.shuffle(symbols)
    spacing = 300
    t = np.arange(T_BEAT, dtype=np.float64) / (T_BEAT - 1)
    total = spacing * (len(symbols) + 1) + T_BEAT
    signal = rng.normal(scale=0.005, size=total)
    annotations = []
    for i, symbol in enumerate(symbols):
        start = spacing * (i + 1)
        signal[start : start + T_BEAT] += _beat_amplitude(rng, symbol, t)
        height, width, latency, _ = CLASS_SHAPES[symbol]
        annotations.append((start + int(round(latency * (T_BEAT - 1))), symbol))
    return signal, annotations
