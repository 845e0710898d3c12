import numpy as np
import pytest

from ecgshapegan import gan, shape_model, synthetic
from ecgshapegan.shape_model import ShapeModel, ShapeModelSet


@pytest.fixture(scope="session")
def fixture_dataset():
    """Two-class synthetic beat set, large enough for clustering and PCA."""
    return synthetic.make_fixture({"N": 40, "V": 30}, seed=11)


@pytest.fixture(scope="session")
def fixture_model_set(fixture_dataset):
    return shape_model.build_shape_models(fixture_dataset, k=2, seed=0, variance=0.95)


def make_tiny_model_set(t_len=12, k=2, b=3, labels=(0, 1), seed=0) -> ShapeModelSet:
    """Hand-built model set with random orthonormal bases; fast to train on."""
    rng = np.random.default_rng(seed)
    models = {}
    for c in labels:
        per_cluster = []
        for _ in range(k):
            q, _ = np.linalg.qr(rng.standard_normal((2 * t_len, b)))
            per_cluster.append(
                ShapeModel(
                    mean=rng.standard_normal(2 * t_len) * 0.1,
                    eigvecs=q.T.copy(),
                    eigvals=np.sort(rng.uniform(0.01, 0.2, size=b))[::-1].copy(),
                    n_samples=8,
                )
            )
        models[c] = per_cluster
    return ShapeModelSet(models=models, requested_k=k, t_len=t_len)


def tiny_real_batch(model_set: ShapeModelSet, label: int, draws: int, seed=0) -> np.ndarray:
    """Real-looking rows near each cluster's span, grouped per cluster."""
    rng = np.random.default_rng(seed)
    blocks = []
    for m in model_set.models[label]:
        w = rng.standard_normal((draws, m.eigvals.size)) * np.sqrt(m.eigvals)
        blocks.append(m.mean + w @ m.eigvecs)
    return np.concatenate(blocks, axis=0)


@pytest.fixture()
def tiny_state():
    model_set = make_tiny_model_set()
    config = gan.TrainConfig(total_steps=0, batch_size=4, seed=3, critic_batchnorm=False)
    return gan.TrainState(config, model_set)
