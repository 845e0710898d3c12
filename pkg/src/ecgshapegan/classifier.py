"""Reduced convolutional beat classifier and the augmentation experiment.

One small 1-D CNN over the amplitude channel stands in for the published
baselines; the experiment compares training on real data only (setting 1)
against real data plus synthetic beats from a trained checkpoint (setting 4).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptyClass, EmptySet
from .gan import Adam, TrainState, generate_beats
from .nets import Affine, Conv1d, Module, max_pool2
from .preprocess import CLASS_SYMBOLS, BeatDataset, Heartbeat, T_BEAT

NUM_CLASSES = 3


class BeatClassifier(Module):
    """conv(5, 8ch)-relu-maxpool x2, FC 32, FC 3; softmax over the head."""

    def __init__(self, seed: int = 0, t_len: int = T_BEAT):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.t_len = t_len
        self.conv1 = self.register_module("conv1", Conv1d(1, 8, 5, rng))
        self.conv2 = self.register_module("conv2", Conv1d(8, 8, 5, rng))
        flat = 8 * ((((t_len - 4) // 2) - 4) // 2)
        self.fc1 = self.register_module("fc1", Affine(flat, 32, rng))
        self.fc2 = self.register_module("fc2", Affine(32, NUM_CLASSES, rng))
        self._flat = flat

    def logits(self, x: Tensor) -> Tensor:
        batch = x.data.shape[0]
        h = max_pool2(ad.relu(self.conv1(x)))
        h = max_pool2(ad.relu(self.conv2(h)))
        h = ad.reshape(h, (batch, self._flat))
        h = ad.relu(self.fc1(h))
        return self.fc2(h)

    def probabilities(self, amplitudes: np.ndarray) -> np.ndarray:
        """Softmax class probabilities for (N, T) amplitude rows."""
        with ad.no_grad():
            logits = self.logits(Tensor(amplitudes[:, None, :])).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, amplitudes: np.ndarray) -> np.ndarray:
        return np.argmax(self.probabilities(amplitudes), axis=1)


def _log_softmax_nll(logits: Tensor, labels: np.ndarray) -> Tensor:
    batch = logits.data.shape[0]
    m = ad.max_(logits, axis=1, keepdims=True)
    lse = ad.add(
        ad.reshape(m, (batch,)),
        ad.log(ad.sum_(ad.exp(ad.sub(logits, m)), axis=1)),
    )
    onehot = np.zeros((batch, NUM_CLASSES))
    onehot[np.arange(batch), labels] = 1.0
    picked = ad.sum_(ad.mul(logits, ad.constant(onehot)), axis=1)
    return ad.mean(ad.sub(lse, picked))


def train_classifier(
    amplitudes: np.ndarray, labels: np.ndarray, seed: int,
    epochs: int = 30, batch_size: int = 32, learning_rate: float = 1e-3,
) -> BeatClassifier:
    """Cross-entropy training with Adam for a fixed epoch budget."""
    present = set(labels.tolist())
    if not present:
        raise EmptyClass("no training data")
    clf = BeatClassifier(seed=seed, t_len=amplitudes.shape[1])
    opt = Adam(clf.param_tensors(), learning_rate, 0.9, 0.999, 1e-8)
    rng = np.random.default_rng(seed)
    n = amplitudes.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            x = Tensor(amplitudes[idx][:, None, :])
            loss = _log_softmax_nll(clf.logits(x), labels[idx])
            grads = [g.data for g in ad.grad(loss, clf.param_tensors())]
            opt.step(grads)
    return clf


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    precision_undefined: bool = False


def evaluate_classifier(clf: BeatClassifier, amplitudes: np.ndarray,
                        labels: np.ndarray) -> dict[int, ClassScores]:
    """One-vs-rest precision/recall/F1; undefined precision reported as 0."""
    if amplitudes.shape[0] == 0:
        raise EmptySet("empty test set")
    predictions = clf.predict(amplitudes)
    scores: dict[int, ClassScores] = {}
    for c in range(NUM_CLASSES):
        tp = int(np.sum((predictions == c) & (labels == c)))
        fp = int(np.sum((predictions == c) & (labels != c)))
        fn = int(np.sum((predictions != c) & (labels == c)))
        if tp + fn == 0:
            continue  # class absent from the test set
        undefined = tp + fp == 0
        precision = 0.0 if undefined else tp / (tp + fp)
        recall = tp / (tp + fn)
        f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        scores[c] = ClassScores(precision, recall, f1, precision_undefined=undefined)
    return scores


@dataclass
class ExperimentReport:
    settings: dict[int, dict[int, ClassScores]]
    train_size: int
    test_size: int
    synthetic_counts: dict[int, int]
    baseline: str = "reduced baseline"
    seeds: list[int] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "baseline": self.baseline,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "seeds": self.seeds,
            "synthetic_counts": {CLASS_SYMBOLS[c]: n for c, n in self.synthetic_counts.items()},
            "settings": {
                str(s): {
                    CLASS_SYMBOLS[c]: {
                        "precision": sc.precision,
                        "recall": sc.recall,
                        "f1": sc.f1,
                        "precision_undefined": sc.precision_undefined,
                    }
                    for c, sc in per_class.items()
                }
                for s, per_class in self.settings.items()
            },
        }
        return json.dumps(payload, sort_keys=True)


def _amplitudes(dataset: BeatDataset) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([b.shape[1] for b in dataset.beats]), dataset.labels()


def default_counts(dataset: BeatDataset) -> dict[int, int]:
    """Balance every class up to the majority class size."""
    counts = dataset.class_counts
    majority = max(counts.values())
    return {c: majority - n for c, n in counts.items() if majority - n > 0}


def synthetic_beats(state: TrainState, counts: dict[int, int], seed: int) -> list[Heartbeat]:
    beats = []
    for c in sorted(counts):
        n = counts[c]
        if n <= 0:
            continue
        rows = generate_beats(state, c, n, seed=seed + c)
        t_len = rows.shape[1] // 2
        for i, row in enumerate(rows):
            beats.append(
                Heartbeat(
                    shape=row.reshape(2, t_len), label=c,
                    source_record="synthetic", r_peak_index=-1,
                )
            )
    return beats


def run_experiment(
    train_set: BeatDataset, test_set: BeatDataset, state: TrainState,
    counts: dict[int, int] | None, seed: int,
    epochs: int = 30, batch_size: int = 32, learning_rate: float = 1e-3,
) -> ExperimentReport:
    """Settings 1 (real only) and 4 (real + synthetic) on identical seeds."""
    if counts is None:
        counts = default_counts(train_set)
    test_x, test_y = _amplitudes(test_set)
    real_x, real_y = _amplitudes(train_set)

    clf1 = train_classifier(real_x, real_y, seed, epochs, batch_size, learning_rate)
    setting1 = evaluate_classifier(clf1, test_x, test_y)

    extra = synthetic_beats(state, counts, seed=seed)
    if extra:
        aug = BeatDataset(beats=train_set.beats + extra)
        aug_x, aug_y = _amplitudes(aug)
        clf4 = train_classifier(aug_x, aug_y, seed, epochs, batch_size, learning_rate)
        setting4 = evaluate_classifier(clf4, test_x, test_y)
    else:
        setting4 = setting1
    return ExperimentReport(
        settings={1: setting1, 4: setting4},
        train_size=len(train_set.beats),
        test_size=len(test_set.beats),
        synthetic_counts={c: n for c, n in counts.items() if n > 0},
        seeds=[seed],
    )
