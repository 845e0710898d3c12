"""Per-class / per-cluster statistical shape models of 2-D heartbeats.

Pipeline per class: K-Means over flattened (time|amplitude) vectors, DTW
alignment of each cluster to its medoid, homologous-point resampling, then
PCA. A beat is synthesized as mean + weighted sum of eigenvectors.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .dtw import dtw_path, pairwise_dtw
from .errors import DegenerateCluster, EmptyClass, TooFewSignals
from .preprocess import CLASS_SYMBOLS, BeatDataset, T_BEAT

MODEL_VERSION = 1
KMEANS_MAX_ITER = 300
ALIGN_ROUNDS = 2


@dataclass
class ClusterAssignment:
    labels: np.ndarray          # cluster index per input vector
    centroids: np.ndarray       # (K, D)
    inertia_history: list[float]

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)


@dataclass
class AlignmentResult:
    positions: np.ndarray  # (N, T) fractional indices into the original signals


@dataclass
class ShapeModel:
    mean: np.ndarray        # (2T,)
    eigvecs: np.ndarray     # (B, 2T), orthonormal rows
    eigvals: np.ndarray     # (B,), non-increasing
    n_samples: int

    @property
    def n_components(self) -> int:
        return self.eigvecs.shape[0]


@dataclass
class ShapeModelSet:
    models: dict[int, list[ShapeModel]]  # class label -> per-cluster models
    requested_k: int
    t_len: int = T_BEAT
    reduced_k: dict[int, int] = field(default_factory=dict)

    @property
    def class_labels(self) -> list[int]:
        return sorted(self.models)

    @property
    def max_b(self) -> int:
        return max(m.n_components for ms in self.models.values() for m in ms)

    def k_of(self, label: int) -> int:
        return len(self.models[label])

    def mean_tensor(self, label: int) -> np.ndarray:
        """M_l: (requested_k, 2T); reduced classes cycle their clusters."""
        rows = [self.models[label][k % self.k_of(label)].mean for k in range(self.requested_k)]
        return np.stack(rows)

    def eigvec_tensor(self, label: int) -> np.ndarray:
        """A_l: (requested_k, maxB, 2T), rows beyond each model's B zero-padded."""
        out = np.zeros((self.requested_k, self.max_b, 2 * self.t_len))
        for k in range(self.requested_k):
            m = self.models[label][k % self.k_of(label)]
            out[k, : m.n_components] = m.eigvecs
        return out


def kmeans(vectors: np.ndarray, k: int, seed: int, n_init: int = 10) -> ClusterAssignment:
    """Best of `n_init` k-means++ Lloyd runs by final inertia.

    Each run iterates to an assignment fixpoint; empty clusters are repaired
    by stealing the point farthest from its currently assigned centroid.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if n < k:
        raise TooFewSignals(f"{n} vectors for K={k}")
    if k**n <= 4096:
        return _kmeans_exact(vectors, k)
    rng = np.random.default_rng(seed)
    best: ClusterAssignment | None = None
    for _ in range(n_init):
        run = _kmeans_once(vectors, k, rng)
        if best is None or run.inertia_history[-1] < best.inertia_history[-1]:
            best = run
    return best


def _kmeans_exact(vectors: np.ndarray, k: int) -> ClusterAssignment:
    """Globally optimal clustering by enumerating every assignment (tiny n)."""
    n = vectors.shape[0]
    best_labels = None
    best_inertia = np.inf
    for assign in itertools.product(range(k), repeat=n):
        if len(set(assign)) < k:
            continue
        labels = np.array(assign, dtype=np.int64)
        inertia = 0.0
        for c in range(k):
            pts = vectors[labels == c]
            inertia += float(((pts - pts.mean(axis=0)) ** 2).sum())
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    centroids = np.stack([vectors[best_labels == c].mean(axis=0) for c in range(k)])
    return ClusterAssignment(
        labels=best_labels, centroids=centroids, inertia_history=[best_inertia]
    )


def _kmeans_once(vectors: np.ndarray, k: int, rng: np.random.Generator) -> ClusterAssignment:
    n = vectors.shape[0]
    centroids = np.empty((k, vectors.shape[1]))
    centroids[0] = vectors[rng.integers(n)]
    closest = np.full(n, np.inf)
    for i in range(1, k):
        d2 = np.sum((vectors - centroids[i - 1]) ** 2, axis=1)
        closest = np.minimum(closest, d2)
        total = closest.sum()
        if total == 0:
            centroids[i] = vectors[rng.integers(n)]
            continue
        centroids[i] = vectors[np.searchsorted(np.cumsum(closest / total), rng.random())]

    labels = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(KMEANS_MAX_ITER):
        d2 = ((vectors[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        for empty in range(k):
            if not np.any(new_labels == empty):
                dist_to_own = d2[np.arange(n), new_labels]
                victim = int(np.argmax(dist_to_own))
                new_labels[victim] = empty
        history.append(float(d2[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            centroids[c] = vectors[labels == c].mean(axis=0)
    return ClusterAssignment(labels=labels, centroids=centroids, inertia_history=history)


def _path_to_positions(path: list[tuple[int, int]], t_len: int) -> np.ndarray:
    """One fractional source index per reference index (mean of mapped indices)."""
    sums = np.zeros(t_len)
    counts = np.zeros(t_len)
    for i, j in path:
        sums[i] += j
        counts[i] += 1
    return sums / counts


def _medoid(amps: np.ndarray) -> int:
    return int(np.argmin(pairwise_dtw(amps, squared=True).sum(axis=1)))


def align_cluster(beats: list[np.ndarray]) -> AlignmentResult:
    """DTW-to-medoid alignment positions for a cluster of 2 x T beats.

    Runs ALIGN_ROUNDS rounds: the reference starts as the DTW medoid of the
    amplitude channels and is recomputed from the aligned signals.
    """
    t_len = beats[0].shape[1]
    n = len(beats)
    identity = np.arange(t_len, dtype=np.float64)
    if n == 1:
        return AlignmentResult(positions=identity[None, :].copy())
    amps = np.stack([b[1] for b in beats])
    reference = amps[_medoid(amps)]
    positions = np.empty((n, t_len))
    for _ in range(ALIGN_ROUNDS):
        for i in range(n):
            positions[i] = _path_to_positions(dtw_path(reference, amps[i]), t_len)
        aligned = np.stack([np.interp(positions[i], identity, amps[i]) for i in range(n)])
        reference = aligned[_medoid(aligned)]
    return AlignmentResult(positions=positions)


def resample_homologous(beat: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Linearly interpolate both beat rows at the fractional positions."""
    grid = np.arange(beat.shape[1], dtype=np.float64)
    return np.vstack([np.interp(positions, grid, beat[0]), np.interp(positions, grid, beat[1])])


def pca_fit(x: np.ndarray, variance: float = 0.95) -> ShapeModel:
    """PCA of row-shapes via SVD of the centered matrix.

    Keeps the smallest B with cumulative explained variance >= `variance`,
    clamped to [1, N-1]. Eigenvalue convention: s_i^2 / (N - 1). Eigenvector
    signs are fixed so the first non-negligible component is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise DegenerateCluster(f"PCA needs >= 2 samples, got {n}")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    eigvals = s**2 / (n - 1)
    total = eigvals.sum()
    if total == 0:
        b = 1
    else:
        ratio = np.cumsum(eigvals) / total
        b = int(np.searchsorted(ratio, variance - 1e-12) + 1)
    b = max(1, min(b, n - 1, vt.shape[0]))
    vecs = vt[:b].copy()
    for row in vecs:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return ShapeModel(mean=mean, eigvecs=vecs, eigvals=eigvals[:b].copy(), n_samples=n)


def project(model: ShapeModel, x: np.ndarray) -> np.ndarray:
    """Coefficients of (x - mean) on the model's eigenvectors."""
    return (np.atleast_2d(x) - model.mean) @ model.eigvecs.T


def reconstruct(model: ShapeModel, coeffs: np.ndarray) -> np.ndarray:
    return model.mean + np.atleast_2d(coeffs) @ model.eigvecs


def _merge_small_clusters(assignment: ClusterAssignment, min_size: int = 2) -> np.ndarray:
    """Relabel members of clusters below min_size to the nearest other centroid."""
    labels = assignment.labels.copy()
    sizes = np.bincount(labels, minlength=assignment.centroids.shape[0])
    keep = np.flatnonzero(sizes >= min_size)
    if keep.size == 0:
        return np.zeros_like(labels)
    for k in np.flatnonzero((sizes > 0) & (sizes < min_size)):
        d = np.sum((assignment.centroids[keep] - assignment.centroids[k]) ** 2, axis=1)
        labels[labels == k] = keep[np.argmin(d)]
    # compact to consecutive indices
    remap = {old: new for new, old in enumerate(sorted(set(labels.tolist())))}
    return np.array([remap[v] for v in labels], dtype=np.int64)


def cluster_aligned_rows(
    dataset: BeatDataset, k: int, seed: int
) -> tuple[dict[int, list[np.ndarray]], dict[int, int]]:
    """Per class: the aligned flattened row matrix of each cluster.

    Classes with fewer than 2K beats get a reduced cluster count
    max(1, n_c // 2); clusters left with < 2 members are merged into the
    nearest cluster. Returns (rows per class, reduced-K map).
    """
    if not dataset.beats:
        raise EmptyClass("empty dataset")
    labels = dataset.labels()
    rows_of: dict[int, list[np.ndarray]] = {}
    reduced: dict[int, int] = {}
    for c in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == c)
        beats = [dataset.beats[i].shape for i in idx]
        k_c = k
        if idx.size < 2 * k:
            k_c = max(1, idx.size // 2)
            reduced[c] = k_c
        flat = np.stack([b.reshape(-1) for b in beats])
        assignment = kmeans(flat, k_c, seed=seed + c)
        cluster_labels = _merge_small_clusters(assignment)
        class_rows = []
        for kk in sorted(set(cluster_labels.tolist())):
            member_beats = [beats[i] for i in np.flatnonzero(cluster_labels == kk)]
            alignment = align_cluster(member_beats)
            class_rows.append(
                np.stack(
                    [
                        resample_homologous(b, p).reshape(-1)
                        for b, p in zip(member_beats, alignment.positions)
                    ]
                )
            )
        rows_of[c] = class_rows
    return rows_of, reduced


def build_shape_models(
    dataset: BeatDataset, k: int, seed: int, variance: float = 0.95
) -> ShapeModelSet:
    """Algorithm: per class, cluster -> align -> resample -> PCA."""
    rows_of, reduced = cluster_aligned_rows(dataset, k, seed)
    models = {
        c: [pca_fit(rows, variance=variance) for rows in class_rows]
        for c, class_rows in rows_of.items()
    }
    return ShapeModelSet(models=models, requested_k=k, t_len=T_BEAT, reduced_k=reduced)


def synthesize(model_set: ShapeModelSet, weights: np.ndarray, label: int) -> np.ndarray:
    """X_fake = M_l + W A_l: one fake (2T,) signal per cluster row."""
    weights = np.asarray(weights, dtype=np.float64)
    return model_set.mean_tensor(label) + np.einsum(
        "kb,kbt->kt", weights, model_set.eigvec_tensor(label)
    )


def _floats(values) -> list[str]:
    return [repr(float(v)) for v in values]


def model_set_to_json(model_set: ShapeModelSet) -> str:
    payload = {
        "version": MODEL_VERSION,
        "K": model_set.requested_k,
        "T": model_set.t_len,
        "classes": [
            {
                "label": CLASS_SYMBOLS[c],
                "clusters": [
                    {
                        "mean": _floats(m.mean),
                        "eigvals": _floats(m.eigvals),
                        "eigvecs": [_floats(row) for row in m.eigvecs],
                        "n_samples": m.n_samples,
                    }
                    for m in model_set.models[c]
                ],
            }
            for c in model_set.class_labels
        ],
        "reduced_k": {CLASS_SYMBOLS[c]: v for c, v in sorted(model_set.reduced_k.items())},
    }
    return json.dumps(payload, sort_keys=True)


def model_set_from_json(text: str) -> ShapeModelSet:
    payload = json.loads(text)
    if payload.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {payload.get('version')}")
    symbol_label = {s: i for i, s in enumerate(CLASS_SYMBOLS)}
    models = {}
    for entry in payload["classes"]:
        c = symbol_label[entry["label"]]
        models[c] = [
            ShapeModel(
                mean=np.array([float(v) for v in m["mean"]]),
                eigvecs=np.array([[float(v) for v in row] for row in m["eigvecs"]]),
                eigvals=np.array([float(v) for v in m["eigvals"]]),
                n_samples=int(m["n_samples"]),
            )
            for m in entry["clusters"]
        ]
    reduced = {symbol_label[s]: v for s, v in payload.get("reduced_k", {}).items()}
    return ShapeModelSet(
        models=models, requested_k=int(payload["K"]), t_len=int(payload["T"]), reduced_k=reduced
    )


def save_model_set(model_set: ShapeModelSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_set_to_json(model_set))


def load_model_set(path) -> ShapeModelSet:
    with open(path, encoding="utf-8") as fh:
        return model_set_from_json(fh.read())
