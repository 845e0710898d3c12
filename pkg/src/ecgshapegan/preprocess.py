"""Filtering, beat segmentation, normalization and train/test splitting.

Beats are 2 x T matrices (T = 270): row 0 a normalized time grid in [0, 1],
row 1 the amplitude channel. The window is 126 samples before and 144 after
the annotated R-peak (0.35 s / 0.40 s at 360 Hz).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSignal, EmptyClass, InvalidCutoff
from .record_ingest import Record

T_BEAT = 270
PRE_SAMPLES = 126   # round(0.35 * 360)
POST_SAMPLES = 144  # round(0.40 * 360)
CLASS_SYMBOLS = ("N", "V", "F")
LABEL_OF_SYMBOL = {s: i for i, s in enumerate(CLASS_SYMBOLS)}

DATASET_VERSION = 1


@dataclass
class Heartbeat:
    shape: np.ndarray  # (2, T_BEAT)
    label: int
    source_record: str
    r_peak_index: int


@dataclass
class BeatDataset:
    beats: list[Heartbeat] = field(default_factory=list)
    norm_stats: dict[str, float] | None = None
    skipped_symbols: int = 0
    dropped_bounds: int = 0

    @property
    def class_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for b in self.beats:
            counts[b.label] = counts.get(b.label, 0) + 1
        return counts

    def labels(self) -> np.ndarray:
        return np.array([b.label for b in self.beats], dtype=np.int64)

    def matrix(self) -> np.ndarray:
        """Flattened (N, 2T) view: T time values then T amplitude values."""
        return np.array([b.shape.reshape(-1) for b in self.beats])


def design_lowpass(fs: float, cutoff: float, num_taps: int = 101) -> np.ndarray:
    """Windowed-sinc FIR taps (Hamming), unit DC gain."""
    if not 0 < cutoff < fs / 2:
        raise InvalidCutoff(f"cutoff {cutoff} Hz outside (0, {fs / 2}) at fs={fs}")
    n = np.arange(num_taps) - (num_taps - 1) / 2
    h = np.sinc(2 * cutoff / fs * n) * np.hamming(num_taps)
    return h / h.sum()


def lowpass_filter(samples, fs: float, cutoff: float, num_taps: int = 101) -> np.ndarray:
    """Zero-phase low-pass: FIR applied forward then backward, reflect-padded."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise InvalidCutoff("empty input sequence")
    h = design_lowpass(fs, cutoff, num_taps)
    pad = len(h)

    def one_pass(sig):
        padded = np.concatenate([sig[pad:0:-1], sig, sig[-2 : -pad - 2 : -1]])
        return np.convolve(padded, h, mode="same")[pad:-pad]

    if x.size < pad + 2:
        # too short for reflect padding; filter against edge-extension
        def one_pass(sig):  # noqa: F811
            padded = np.concatenate([np.full(pad, sig[0]), sig, np.full(pad, sig[-1])])
            return np.convolve(padded, h, mode="same")[pad:-pad]

    return one_pass(one_pass(x[::-1])[::-1])


def segment_heartbeats(record: Record, channel: int = 0) -> BeatDataset:
    """Cut labeled fixed-length beats around annotated R-peaks."""
    signal = record.signals[channel]
    n = signal.shape[0]
    time_row = np.arange(T_BEAT, dtype=np.float64) / (T_BEAT - 1)
    dataset = BeatDataset()
    for ann in record.annotations:
        if ann.symbol not in LABEL_OF_SYMBOL:
            dataset.skipped_symbols += 1
            continue
        lo = ann.sample_index - PRE_SAMPLES
        hi = ann.sample_index + POST_SAMPLES
        if lo < 0 or hi > n:
            dataset.dropped_bounds += 1
            continue
        shape = np.vstack([time_row, signal[lo:hi]])
        dataset.beats.append(
            Heartbeat(
                shape=shape,
                label=LABEL_OF_SYMBOL[ann.symbol],
                source_record=record.header.record_name,
                r_peak_index=ann.sample_index,
            )
        )
    return dataset


def compute_norm_stats(dataset: BeatDataset) -> dict[str, float]:
    """Per-record max-absolute amplitude over the given (training) beats."""
    stats: dict[str, float] = {}
    for b in dataset.beats:
        peak = float(np.max(np.abs(b.shape[1])))
        stats[b.source_record] = max(stats.get(b.source_record, 0.0), peak)
    for rec, peak in stats.items():
        if peak == 0.0:
            raise DegenerateSignal(f"record {rec}: all-zero amplitudes")
    return stats


def normalize_amplitudes(
    dataset: BeatDataset, stats: dict[str, float] | None = None
) -> tuple[BeatDataset, dict[str, float]]:
    """Scale each beat's amplitude row by 1/max|amp| of its source record.

    When `stats` is given (computed from the training partition) it is used
    for records it covers; other records fall back to their own maximum.
    """
    if not dataset.beats:
        raise DegenerateSignal("empty dataset")
    own = compute_norm_stats(dataset)
    merged = dict(own)
    if stats:
        merged.update(stats)
    beats = [
        Heartbeat(
            shape=np.vstack([b.shape[0], b.shape[1] / merged[b.source_record]]),
            label=b.label,
            source_record=b.source_record,
            r_peak_index=b.r_peak_index,
        )
        for b in dataset.beats
    ]
    out = BeatDataset(
        beats=beats,
        norm_stats=merged,
        skipped_symbols=dataset.skipped_symbols,
        dropped_bounds=dataset.dropped_bounds,
    )
    return out, merged


def denormalize_amplitudes(dataset: BeatDataset) -> BeatDataset:
    if not dataset.norm_stats:
        raise DegenerateSignal("dataset carries no normalization stats")
    beats = [
        Heartbeat(
            shape=np.vstack([b.shape[0], b.shape[1] * dataset.norm_stats[b.source_record]]),
            label=b.label,
            source_record=b.source_record,
            r_peak_index=b.r_peak_index,
        )
        for b in dataset.beats
    ]
    return BeatDataset(beats=beats, norm_stats=None)


def split_train_test(
    dataset: BeatDataset, ratio: float, seed: int
) -> tuple[BeatDataset, BeatDataset]:
    """Per-class stratified split; |train_c| = round(ratio * n_c)."""
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    labels = dataset.labels()
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for label in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == label)
        if idx.size == 0:
            raise EmptyClass(f"class {label} has no beats")
        perm = idx[rng.permutation(idx.size)]
        n_train = int(round(ratio * idx.size))
        train_idx.extend(perm[:n_train].tolist())
        test_idx.extend(perm[n_train:].tolist())
    if any(c == 0 for c in dataset.class_counts.values()):
        raise EmptyClass("a class has zero beats")
    mk = lambda idxs: BeatDataset(beats=[dataset.beats[i] for i in sorted(idxs)])
    return mk(train_idx), mk(test_idx)


def dataset_to_json(dataset: BeatDataset) -> str:
    payload = {
        "version": DATASET_VERSION,
        "T": T_BEAT,
        "beats": [
            {
                "label": CLASS_SYMBOLS[b.label],
                "record": b.source_record,
                "r_index": b.r_peak_index,
                "time": [repr(v) for v in b.shape[0].tolist()],
                "amp": [repr(v) for v in b.shape[1].tolist()],
            }
            for b in dataset.beats
        ],
        "norm_stats": (
            {k: repr(v) for k, v in sorted(dataset.norm_stats.items())}
            if dataset.norm_stats
            else None
        ),
    }
    return json.dumps(payload, sort_keys=True)


def dataset_from_json(text: str) -> BeatDataset:
    payload = json.loads(text)
    if payload.get("version") != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {payload.get('version')}")
    beats = [
        Heartbeat(
            shape=np.array(
                [[float(v) for v in b["time"]], [float(v) for v in b["amp"]]]
            ),
            label=LABEL_OF_SYMBOL[b["label"]],
            source_record=b["record"],
            r_peak_index=int(b["r_index"]),
        )
        for b in payload["beats"]
    ]
    stats = payload.get("norm_stats")
    norm = {k: float(v) for k, v in stats.items()} if stats else None
    return BeatDataset(beats=beats, norm_stats=norm)


def save_dataset(dataset: BeatDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dataset_to_json(dataset))


def load_dataset(path) -> BeatDataset:
    with open(path, encoding="utf-8") as fh:
        return dataset_from_json(fh.read())
