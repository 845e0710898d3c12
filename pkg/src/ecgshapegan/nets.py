"""Generator and critic networks on top of the autodiff engine.

Generator: three pointwise (kernel-size-1) conv layers of widths 16/32/64
with batch norm (ReLU after the first two), then a fully connected layer to
the K x maxB weight matrix. Critic: the same conv stack over the (time,
amplitude) channel pair, FC to 128, a 3-layer LSTM with hidden size 256,
then FC-tanh 128, FC-tanh 64 and a final FC head. The critic value used in
the Wasserstein loss is the raw logit; sigmoid is applied only for scoring.

Pointwise conv stacks run internally on a flat (batch*length, channels)
layout: a kernel-size-1 conv is exactly one affine map per position.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeMismatch

NUM_CLASSES = 3


class Module:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._modules: dict[str, Module] = {}

    def register_param(self, name: str, tensor: Tensor) -> Tensor:
        self._params[name] = tensor
        return tensor

    def register_buffer(self, name: str, array: np.ndarray) -> np.ndarray:
        self._buffers[name] = array
        return array

    def register_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def params(self) -> list[tuple[str, Tensor]]:
        out = list(self._params.items())
        for mname, mod in self._modules.items():
            out.extend((f"{mname}.{p}", t) for p, t in mod.params())
        return out

    def param_tensors(self) -> list[Tensor]:
        return [t for _, t in self.params()]

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = list(self._buffers.items())
        for mname, mod in self._modules.items():
            out.extend((f"{mname}.{b}", a) for b, a in mod.buffers())
        return out

    def state_dict(self) -> dict:
        state = {}
        for name, t in self.params():
            state[name] = {"shape": list(t.data.shape), "data": t.data.reshape(-1).tolist()}
        for name, a in self.buffers():
            state["buffer:" + name] = {"shape": list(a.shape), "data": a.reshape(-1).tolist()}
        return state

    def load_state_dict(self, state: dict) -> None:
        for name, t in self.params():
            entry = state[name]
            t.data = np.array(entry["data"], dtype=t.data.dtype).reshape(entry["shape"])
        buffer_map = dict(self.buffers())
        for key, entry in state.items():
            if key.startswith("buffer:"):
                arr = buffer_map[key[len("buffer:"):]]
                arr[...] = np.array(entry["data"]).reshape(entry["shape"])


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape))


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, w), b)


class Affine(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.w = self.register_param("w", _uniform_init(rng, (in_dim, out_dim), in_dim))
        self.b = self.register_param("b", _uniform_init(rng, (out_dim,), in_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return affine(x, self.w, self.b)


def _to_flat(x: Tensor) -> tuple[Tensor, int, int]:
    """(batch, C, L) -> ((batch*L, C), batch, L)."""
    batch, c, length = x.data.shape
    return ad.reshape(ad.transpose(x, (0, 2, 1)), (batch * length, c)), batch, length


def _from_flat(x: Tensor, batch: int, length: int) -> Tensor:
    c = x.data.shape[1]
    return ad.transpose(ad.reshape(x, (batch, length, c)), (0, 2, 1))


def pointwise_conv1(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Kernel-size-1 conv on (batch, C_in, L): the same affine map per position."""
    flat, batch, length = _to_flat(x)
    return _from_flat(affine(flat, w, b), batch, length)


class Conv1x1(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        super().__init__()
        self.w = self.register_param("w", _uniform_init(rng, (c_in, c_out), c_in))
        self.b = self.register_param("b", _uniform_init(rng, (c_out,), c_in))

    def __call__(self, x: Tensor) -> Tensor:
        return pointwise_conv1(x, self.w, self.b)

    def flat(self, x: Tensor) -> Tensor:
        """Apply to an already-flat (N, C_in) tensor."""
        return affine(x, self.w, self.b)


class Conv1d(Module):
    """Valid 1-D convolution (used by the harness classifier, kernel 5)."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        self.kernel = kernel
        self.c_in = c_in
        fan_in = c_in * kernel
        self.w = self.register_param("w", _uniform_init(rng, (kernel * c_in, c_out), fan_in))
        self.b = self.register_param("b", _uniform_init(rng, (c_out,), fan_in))

    def __call__(self, x: Tensor) -> Tensor:
        length = x.data.shape[2]
        l_out = length - self.kernel + 1
        taps = [
            ad.slice_(x, (slice(None), slice(None), slice(i, i + l_out)))
            for i in range(self.kernel)
        ]
        cols = ad.concat(taps, axis=1)  # (batch, kernel*c_in, l_out)
        return pointwise_conv1(cols, self.w, self.b)


def max_pool2(x: Tensor) -> Tensor:
    batch, c, length = x.data.shape
    half = length // 2
    if length % 2:
        x = ad.slice_(x, (slice(None), slice(None), slice(0, 2 * half)))
    return ad.max_(ad.reshape(x, (batch, c, half, 2)), axis=3)


class BatchNorm(Module):
    """Batch norm over axis 0 of (N, channels) tensors.

    Train mode normalizes with batch statistics (var = E[x^2] - E[x]^2) and
    updates running buffers; eval mode is a fixed affine map of the input.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = self.register_param("gamma", Tensor(np.ones(channels)))
        self.beta = self.register_param("beta", Tensor(np.zeros(channels)))
        self.running_mean = self.register_buffer("running_mean", np.zeros(channels))
        self.running_var = self.register_buffer("running_var", np.ones(channels))

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        if train:
            mu = ad.mean(x, axis=0)
            var = ad.sub(ad.mean(ad.mul(x, x), axis=0), ad.mul(mu, mu))
            self.running_mean[...] = (
                (1 - self.momentum) * self.running_mean + self.momentum * mu.data
            )
            self.running_var[...] = (
                (1 - self.momentum) * self.running_var + self.momentum * var.data
            )
        else:
            mu = ad.constant(self.running_mean)
            var = ad.constant(self.running_var)
        inv = ad.pow_const(ad.add(var, ad.constant(self.eps)), -0.5)
        scale = ad.mul(self.gamma, inv)
        shift = ad.sub(self.beta, ad.mul(mu, scale))
        return ad.add(ad.mul(x, scale), shift)


def batch_norm(x: Tensor, bn: BatchNorm, train: bool) -> Tensor:
    return bn(x, train)


class LSTM(Module):
    """Stacked LSTM; returns the last hidden state of the top layer.

    Gate layout follows the (input, forget, cell, output) convention with
    weights w_ih (in, 4H), w_hh (H, 4H) and two bias vectors per layer.
    """

    def __init__(self, input_size: int, hidden_size: int, num_layers: int,
                 rng: np.random.Generator):
        super().__init__()
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.layers = []
        for layer in range(num_layers):
            in_dim = input_size if layer == 0 else hidden_size
            w_ih = self.register_param(
                f"w_ih_{layer}", _uniform_init(rng, (in_dim, 4 * hidden_size), hidden_size)
            )
            w_hh = self.register_param(
                f"w_hh_{layer}", _uniform_init(rng, (hidden_size, 4 * hidden_size), hidden_size)
            )
            b_ih = self.register_param(
                f"b_ih_{layer}", _uniform_init(rng, (4 * hidden_size,), hidden_size)
            )
            b_hh = self.register_param(
                f"b_hh_{layer}", _uniform_init(rng, (4 * hidden_size,), hidden_size)
            )
            self.layers.append((w_ih, w_hh, b_ih, b_hh))

    def __call__(self, xs: list[Tensor]) -> Tensor:
        """xs: list over time of (batch, input_size) tensors."""
        h_dim = self.hidden_size
        seq = xs
        for w_ih, w_hh, b_ih, b_hh in self.layers:
            # h0 = c0 = 0, so the first step's recurrent term and forget-gate
            # product vanish identically and are skipped.
            h = c = None
            outputs = []
            for x in seq:
                gates = affine(x, w_ih, b_ih)
                if h is None:
                    gates = ad.add(gates, b_hh)
                else:
                    gates = ad.add(gates, affine(h, w_hh, b_hh))
                i_g = ad.sigmoid(ad.slice_(gates, (slice(None), slice(0, h_dim))))
                g_g = ad.tanh(ad.slice_(gates, (slice(None), slice(2 * h_dim, 3 * h_dim))))
                o_g = ad.sigmoid(ad.slice_(gates, (slice(None), slice(3 * h_dim, 4 * h_dim))))
                new_c = ad.mul(i_g, g_g)
                if c is not None:
                    f_g = ad.sigmoid(ad.slice_(gates, (slice(None), slice(h_dim, 2 * h_dim))))
                    new_c = ad.add(ad.mul(f_g, c), new_c)
                c = new_c
                h = ad.mul(o_g, ad.tanh(c))
                outputs.append(h)
            seq = outputs
        return seq[-1]


def lstm_forward(lstm: LSTM, xs: list[Tensor]) -> Tensor:
    return lstm(xs)


def one_hot(labels, num_classes: int = NUM_CLASSES) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return ad.constant(out)


class Generator(Module):
    def __init__(self, k: int, max_b: int, z_dim: int = 100,
                 num_classes: int = NUM_CLASSES, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.k = k
        self.max_b = max_b
        self.z_dim = z_dim
        self.num_classes = num_classes
        self.conv1 = self.register_module("conv1", Conv1x1(z_dim + num_classes, 16, rng))
        self.bn1 = self.register_module("bn1", BatchNorm(16))
        self.conv2 = self.register_module("conv2", Conv1x1(16, 32, rng))
        self.bn2 = self.register_module("bn2", BatchNorm(32))
        self.conv3 = self.register_module("conv3", Conv1x1(32, 64, rng))
        self.bn3 = self.register_module("bn3", BatchNorm(64))
        self.fc = self.register_module("fc", Affine(64, k * max_b, rng))

    def __call__(self, z: Tensor, labels, train: bool) -> Tensor:
        if z.data.ndim != 2 or z.data.shape[1] != self.z_dim:
            raise ShapeMismatch(f"expected (batch, {self.z_dim}) noise, got {z.data.shape}")
        batch = z.data.shape[0]
        # spatial length is 1, so the conv stack runs directly on (batch, C)
        x = ad.concat([z, one_hot(labels, self.num_classes)], axis=1)
        x = ad.relu(self.bn1(self.conv1.flat(x), train))
        x = ad.relu(self.bn2(self.conv2.flat(x), train))
        x = self.bn3(self.conv3.flat(x), train)
        w = self.fc(x)
        return ad.reshape(w, (batch, self.k, self.max_b))


class Critic(Module):
    def __init__(self, t_len: int = 270, num_classes: int = NUM_CLASSES,
                 use_batchnorm: bool = True, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.t_len = t_len
        self.num_classes = num_classes
        self.use_batchnorm = use_batchnorm
        self.conv1 = self.register_module("conv1", Conv1x1(2, 16, rng))
        self.conv2 = self.register_module("conv2", Conv1x1(16, 32, rng))
        self.conv3 = self.register_module("conv3", Conv1x1(32, 64, rng))
        if use_batchnorm:
            self.bn1 = self.register_module("bn1", BatchNorm(16))
            self.bn2 = self.register_module("bn2", BatchNorm(32))
            self.bn3 = self.register_module("bn3", BatchNorm(64))
        self.fc1 = self.register_module("fc1", Affine(64 * t_len, 128, rng))
        self.lstm = self.register_module(
            "lstm", LSTM(128 + num_classes, 256, num_layers=3, rng=rng)
        )
        self.fc2 = self.register_module("fc2", Affine(256, 128, rng))
        self.fc3 = self.register_module("fc3", Affine(128, 64, rng))
        self.fc4 = self.register_module("fc4", Affine(64, 1, rng))

    def _norm(self, x: Tensor, which: int, train: bool) -> Tensor:
        if not self.use_batchnorm:
            return x
        return getattr(self, f"bn{which}")(x, train)

    def __call__(self, x: Tensor, labels, train: bool) -> Tensor:
        """Critic logit per sample; x is (batch, 2, T) or flat (batch, 2T) rows."""
        if x.data.ndim == 2:
            if x.data.shape[1] != 2 * self.t_len:
                raise ShapeMismatch(f"flat critic input needs 2T columns, got {x.data.shape}")
            x = ad.reshape(x, (x.data.shape[0], 2, self.t_len))
        if x.data.ndim != 3 or x.data.shape[1:] != (2, self.t_len):
            raise ShapeMismatch(f"critic expects (batch, 2, {self.t_len}), got {x.data.shape}")
        batch = x.data.shape[0]
        h, _, _ = _to_flat(x)  # (batch*T, 2), position-major rows
        h = ad.relu(self._norm(self.conv1.flat(h), 1, train))
        h = ad.relu(self._norm(self.conv2.flat(h), 2, train))
        h = self._norm(self.conv3.flat(h), 3, train)
        h = ad.reshape(h, (batch, 64 * self.t_len))
        h = self.fc1(h)
        h = ad.concat([h, one_hot(labels, self.num_classes)], axis=1)
        h = self.lstm([h])
        h = ad.tanh(self.fc2(h))
        h = ad.tanh(self.fc3(h))
        return self.fc4(h)

    def score(self, x: Tensor, labels, train: bool = False) -> Tensor:
        """Reporting head: sigmoid of the logit, strictly in (0, 1)."""
        return ad.sigmoid(self(x, labels, train))


def generator_forward(gen: Generator, z: Tensor, labels, train: bool = False) -> Tensor:
    return gen(z, labels, train)


def discriminator_forward(critic: Critic, x: Tensor, labels, train: bool = False) -> Tensor:
    return critic.score(x, labels, train)
