"""Conditional WGAN-GP over the shape-model synthesis path.

The generator emits eigenvector weights W; fake signals are M_l + W A_l, so
every fake sample lies in its cluster's affine span by construction (checked
at every critic step). The critic is trained on the Wasserstein loss with a
gradient penalty on per-sample interpolates.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NonFiniteLoss, NumericError, ShapeMismatch
from .nets import Critic, Generator
from .preprocess import BeatDataset, T_BEAT
from .shape_model import ShapeModelSet

CHECKPOINT_VERSION = 1
SPAN_RESIDUAL_TOL = 1e-9
SPAN_RESIDUAL_TOL_F32 = 1e-4


def span_tolerance(dtype) -> float:
    return SPAN_RESIDUAL_TOL if np.dtype(dtype) == np.float64 else SPAN_RESIDUAL_TOL_F32


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 64
    z_dim: int = 100
    gp_lambda: float = 10.0
    n_critic: int = 5
    adam_beta1: float = 0.0
    adam_beta2: float = 0.9
    adam_eps: float = 1e-8
    total_steps: int = 0
    seed: int = 0
    signal_len: int = T_BEAT
    train_split: float = 0.7
    critic_batchnorm: bool = True
    checkpoint_interval: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.gp_lambda < 0:
            raise ValueError("gp_lambda must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text))


class Adam:
    def __init__(self, params: list[Tensor], lr: float, beta1: float, beta2: float, eps: float):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self) -> dict:
        return {
            "t": self.t,
            "m": [x.reshape(-1).tolist() for x in self.m],
            "v": [x.reshape(-1).tolist() for x in self.v],
        }

    def load_state(self, state: dict) -> None:
        self.t = state["t"]
        for buf, flat in zip(self.m, state["m"]):
            buf[...] = np.array(flat).reshape(buf.shape)
        for buf, flat in zip(self.v, state["v"]):
            buf[...] = np.array(flat).reshape(buf.shape)


class TrainState:
    def __init__(self, config: TrainConfig, model_set: ShapeModelSet):
        self.config = config
        self.model_set = model_set
        self.k = model_set.requested_k
        self.max_b = model_set.max_b
        self.np_dtype = np.dtype(config.dtype)
        with ad.default_dtype(self.np_dtype):
            self.generator = Generator(
                k=self.k, max_b=self.max_b, z_dim=config.z_dim, seed=config.seed
            )
            self.critic = Critic(
                t_len=model_set.t_len,
                use_batchnorm=config.critic_batchnorm,
                seed=config.seed + 1,
            )
            self.adam_g = Adam(
                self.generator.param_tensors(), config.learning_rate,
                config.adam_beta1, config.adam_beta2, config.adam_eps,
            )
            self.adam_c = Adam(
                self.critic.param_tensors(), config.learning_rate,
                config.adam_beta1, config.adam_beta2, config.adam_eps,
            )
        self.rng = np.random.default_rng(np.random.Philox(key=config.seed))
        self.step = 0
        self.history: list[dict] = []
        # constants of the synthesis map, per class
        self._means = {c: model_set.mean_tensor(c) for c in model_set.class_labels}
        self._bases = {c: model_set.eigvec_tensor(c) for c in model_set.class_labels}

    def draws_per_batch(self) -> int:
        return max(1, self.config.batch_size // self.k)


def sample_fake(state: TrainState, label: int, draws: int, train: bool = True):
    """Draw z, run the generator and synthesize one fake signal per cluster.

    Returns (samples Tensor of shape (draws*K, 2T), cluster index array).
    Rows are grouped in blocks per cluster: block k holds all draws of k.
    """
    cfg = state.config
    with ad.default_dtype(state.np_dtype):
        z = Tensor(state.rng.standard_normal((draws, cfg.z_dim)))
        labels = np.full(draws, label)
        w = state.generator(z, labels, train=train)  # (draws, K, maxB)
        mean_rows = state._means[label]
        basis = state._bases[label]
        blocks = []
        for k in range(state.k):
            w_k = ad.reshape(
                ad.slice_(w, (slice(None), slice(k, k + 1), slice(None))), (draws, state.max_b)
            )
            fake_k = ad.add(ad.matmul(w_k, ad.constant(basis[k])), ad.constant(mean_rows[k]))
            blocks.append(fake_k)
        samples = ad.concat(blocks, axis=0)
    clusters = np.repeat(np.arange(state.k), draws)
    return samples, clusters


def _span_residual(state: TrainState, fake: np.ndarray, clusters: np.ndarray, label: int) -> float:
    """Max distance of fake rows from their cluster's affine span."""
    worst = 0.0
    for k in range(state.k):
        rows = fake[clusters == k]
        if rows.size == 0:
            continue
        model = state.model_set.models[label][k % state.model_set.k_of(label)]
        centered = rows - model.mean
        resid = centered - (centered @ model.eigvecs.T) @ model.eigvecs
        worst = max(worst, float(np.max(np.abs(resid))))
    return worst


def gradient_penalty(critic: Critic, real: np.ndarray, fake: np.ndarray, labels,
                     eps: np.ndarray) -> Tensor:
    """Mean over the batch of (||grad_xhat D(xhat, l)||_2 - 1)^2.

    `eps` is one interpolation coefficient per sample, shared across all
    coordinates. The result stays differentiable w.r.t. critic parameters.
    """
    if real.shape != fake.shape:
        raise ShapeMismatch(f"real {real.shape} vs fake {fake.shape}")
    x_hat = Tensor(eps * real + (1.0 - eps) * fake)
    logits = critic(x_hat, labels, train=True)
    total = ad.sum_(logits)
    (g,) = ad.grad_graph(total, [x_hat])
    norms = ad.l2_norm_rows(g)
    return ad.mean(ad.pow_const(ad.sub(norms, ad.constant(1.0)), 2.0))


def critic_step(state: TrainState, real: np.ndarray, label: int) -> tuple[float, float]:
    """One Adam update of the critic on Eq.-style Wasserstein loss + penalty.

    `real` rows must be grouped per cluster in the same block order as
    sample_fake output. Returns (pre-update loss, gp term).
    """
    cfg = state.config
    draws = real.shape[0] // state.k
    fake, clusters = sample_fake(state, label, draws)
    fake_detached = fake.data
    if real.shape != fake_detached.shape:
        raise ShapeMismatch(f"real {real.shape} vs fake {fake_detached.shape}")

    residual = _span_residual(state, fake_detached, clusters, label)
    if residual >= span_tolerance(state.np_dtype):
        raise NumericError(f"fake sample left its affine span (residual {residual:.3e})")

    with ad.default_dtype(state.np_dtype):
        labels = np.full(real.shape[0], label)
        n = real.shape[0]
        # one forward over the concatenated batch; fake rows first
        d_both = state.critic(
            Tensor(np.concatenate([fake_detached, real], axis=0)),
            np.full(2 * n, label), train=True,
        )
        d_fake = ad.slice_(d_both, (slice(0, n), slice(None)))
        d_real = ad.slice_(d_both, (slice(n, 2 * n), slice(None)))
        loss = ad.sub(ad.mean(d_fake), ad.mean(d_real))
        gp_value = 0.0
        if cfg.gp_lambda > 0:
            eps = state.rng.uniform(size=(real.shape[0], 1))
            gp = gradient_penalty(state.critic, real, fake_detached, labels, eps)
            gp_value = gp.item()
            loss = ad.add(loss, ad.mul(ad.constant(cfg.gp_lambda), gp))
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            raise NonFiniteLoss(f"critic loss {loss_value} at step {state.step}")
        params = state.critic.param_tensors()
        grads = [g.data for g in ad.grad(loss, params)]
    state.adam_c.step(grads)
    return loss_value, gp_value


def generator_step(state: TrainState, label: int) -> float:
    """One Adam update of the generator minimizing -E[critic logit of fake]."""
    draws = state.draws_per_batch()
    fake, _ = sample_fake(state, label, draws)
    with ad.default_dtype(state.np_dtype):
        labels = np.full(fake.data.shape[0], label)
        loss = ad.neg(ad.mean(state.critic(fake, labels, train=True)))
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            raise NonFiniteLoss(f"generator loss {loss_value} at step {state.step}")
        params = state.generator.param_tensors()
        grads = [g.data for g in ad.grad(loss, params)]
    state.adam_g.step(grads)
    return loss_value


def assign_clusters(dataset: BeatDataset, model_set: ShapeModelSet) -> dict[int, list[np.ndarray]]:
    """Per class: indices of beats nearest (in 2T space) to each cluster mean."""
    matrix = dataset.matrix()
    labels = dataset.labels()
    out: dict[int, list[np.ndarray]] = {}
    for c in model_set.class_labels:
        idx = np.flatnonzero(labels == c)
        means = np.stack([m.mean for m in model_set.models[c]])
        nearest = np.argmin(
            ((matrix[idx][:, None, :] - means[None, :, :]) ** 2).sum(axis=2), axis=1
        )
        out[c] = [idx[nearest == k] for k in range(len(model_set.models[c]))]
    return out


def _real_batch(state: TrainState, matrix: np.ndarray,
                clusters: dict[int, list[np.ndarray]], label: int, draws: int) -> np.ndarray:
    """Real rows grouped per cluster, matching sample_fake's block layout."""
    k_actual = state.model_set.k_of(label)
    blocks = []
    for k in range(state.k):
        members = clusters[label][k % k_actual]
        pick = state.rng.choice(members, size=draws, replace=members.size < draws)
        blocks.append(matrix[pick])
    return np.concatenate(blocks, axis=0)


def train(config: TrainConfig, dataset: BeatDataset, model_set: ShapeModelSet,
          log_path=None, checkpoint_path=None) -> TrainState:
    """n_critic critic steps per generator step, classes round-robin."""
    state = TrainState(config, model_set)
    matrix = dataset.matrix()
    clusters = assign_clusters(dataset, model_set)
    class_cycle = model_set.class_labels
    draws = state.draws_per_batch()
    last_gen_loss = None
    for step in range(1, config.total_steps + 1):
        state.step = step
        label = class_cycle[(step - 1) % len(class_cycle)]
        real = _real_batch(state, matrix, clusters, label, draws)
        c_loss, gp_term = critic_step(state, real, label)
        row = {"step": step, "critic_loss": c_loss, "gen_loss": None, "gp_term": gp_term}
        if step % config.n_critic == 0:
            last_gen_loss = generator_step(state, label)
            row["gen_loss"] = last_gen_loss
        state.history.append(row)
        if checkpoint_path and config.checkpoint_interval and step % config.checkpoint_interval == 0:
            save_checkpoint(state, checkpoint_path)
    if log_path:
        write_log(state.history, log_path)
    if checkpoint_path:
        save_checkpoint(state, checkpoint_path)
    return state


def write_log(history: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,critic_loss,gen_loss,gp_term\n")
        for row in history:
            gen = "" if row["gen_loss"] is None else repr(row["gen_loss"])
            fh.write(f"{row['step']},{row['critic_loss']!r},{gen},{row['gp_term']!r}\n")


def checkpoint_to_json(state: TrainState) -> str:
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(state.config),
        "generator": state.generator.state_dict(),
        "critic": state.critic.state_dict(),
        "adam_g": state.adam_g.state(),
        "adam_c": state.adam_c.state(),
        "rng_state": _jsonable(state.rng.bit_generator.state),
        "step": state.step,
    }
    return json.dumps(payload, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _unjsonable(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _unjsonable(v) for k, v in obj.items()}
    return obj


def save_checkpoint(state: TrainState, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(checkpoint_to_json(state))


def load_checkpoint(path, model_set: ShapeModelSet) -> TrainState:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    config = TrainConfig(**payload["config"])
    state = TrainState(config, model_set)
    state.generator.load_state_dict(payload["generator"])
    state.critic.load_state_dict(payload["critic"])
    state.adam_g.load_state(payload["adam_g"])
    state.adam_c.load_state(payload["adam_c"])
    state.rng.bit_generator.state = _unjsonable(payload["rng_state"])
    state.step = payload["step"]
    return state


def generate_beats(state: TrainState, label: int, count: int, seed: int) -> np.ndarray:
    """Sample `count` fake (2T,) rows for a class with the generator in eval mode."""
    rng = np.random.default_rng(np.random.Philox(key=seed))
    draws = (count + state.k - 1) // state.k
    with ad.default_dtype(state.np_dtype), ad.no_grad():
        z = Tensor(rng.standard_normal((draws, state.config.z_dim)))
        w = state.generator(z, np.full(draws, label), train=False)
    mean_rows = state._means[label]
    basis = state._bases[label]
    # synthesis runs in float64 regardless of training precision, so the
    # emitted beats sit in their affine span to full accuracy
    coeff = w.data.astype(np.float64)
    fake = mean_rows[None, :, :] + np.einsum("nkb,kbt->nkt", coeff, basis)
    return fake.reshape(draws * state.k, -1)[:count]
