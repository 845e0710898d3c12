"""Reverse-mode autodiff on numpy arrays with higher-order gradients.

Every primitive's backward rule is itself expressed in terms of primitives,
so running `grad(..., create_graph=True)` yields gradient tensors that can be
differentiated again (needed for the gradient-penalty term, whose gradient
w.r.t. the critic parameters goes through a first gradient w.r.t. the input).

Each node stores one VJP callable per parent, and `grad` only invokes the
callables for parents on a path to a requested tensor. This matters: the
inner gradient-penalty backward needs only the input gradient, and the
generator update needs no critic weight gradients, so the corresponding
(large) GEMMs are skipped entirely.

relu and max use a constant mask as their backward rule: their second
derivative is taken as 0 everywhere (subgradient 0 at 0).
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import NonFiniteValue, NotScalarOutput, ShapeMismatch

CHECK_FINITE = False

_RECORDING = [True]
_DTYPE = [np.float64]


@contextmanager
def recording(flag: bool):
    _RECORDING.append(flag)
    try:
        yield
    finally:
        _RECORDING.pop()


def no_grad():
    return recording(False)


@contextmanager
def default_dtype(dtype):
    """All tensors created inside the context use `dtype` (float32 training)."""
    _DTYPE.append(np.dtype(dtype))
    try:
        yield
    finally:
        _DTYPE.pop()


class Tensor:
    __slots__ = ("data", "parents", "vjps")

    def __init__(self, data, parents=(), vjps=()):
        self.data = np.asarray(data, dtype=_DTYPE[-1])
        self.parents = parents
        self.vjps = vjps

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_const(self, p)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(np.asarray(x, dtype=_DTYPE[-1]))


def _make(data, parents, vjps) -> Tensor:
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NonFiniteValue("non-finite value produced by a forward op")
    if _RECORDING[-1]:
        return Tensor(data, parents, vjps)
    return Tensor(data)


def _unbroadcast(g: Tensor, shape: tuple) -> Tensor:
    if g.data.shape == shape:
        return g
    extra = g.data.ndim - len(shape)
    if extra > 0:
        g = sum_(g, axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.data.shape[i] != 1)
    if axes:
        g = sum_(g, axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(g, b.data.shape),
        ),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data - b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(neg(g), b.data.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), (neg,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        (
            lambda g: _unbroadcast(mul(g, b), a.data.shape),
            lambda g: _unbroadcast(mul(g, a), b.data.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data / b.data,
        (a, b),
        (
            lambda g: _unbroadcast(div(g, b), a.data.shape),
            lambda g: _unbroadcast(neg(div(mul(g, a), mul(b, b))), b.data.shape),
        ),
    )


def pow_const(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)
    return _make(
        a.data**p, (a,), (lambda g: mul(g, mul(constant(p), pow_const(a, p - 1))),)
    )


def sqrt(a) -> Tensor:
    return pow_const(a, 0.5)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = _make(np.exp(a.data), (a,), ())
    out.vjps = (lambda g: mul(g, out),)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), (lambda g: div(g, a),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = _make(np.tanh(a.data), (a,), ())
    out.vjps = (lambda g: mul(g, sub(constant(1.0), mul(out, out))),)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _make(1.0 / (1.0 + np.exp(-a.data)), (a,), ())
    out.vjps = (lambda g: mul(g, mul(out, sub(constant(1.0), out))),)
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = constant((a.data > 0).astype(a.data.dtype))
    return _make(a.data * mask.data, (a,), (lambda g: mul(g, mask),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul {a.data.shape} @ {b.data.shape}")
    return _make(
        a.data @ b.data,
        (a, b),
        (
            lambda g: matmul(g, transpose(b)),
            lambda g: matmul(transpose(a), g),
        ),
    )


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.data.ndim)))
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), (lambda g: transpose(g, inverse),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    orig = a.data.shape
    return _make(a.data.reshape(shape), (a,), (lambda g: reshape(g, orig),))


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    orig = a.data.shape

    def vjp(g):
        if axis is None:
            return broadcast_to(reshape(g, (1,) * len(orig)), orig)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        kept = list(orig)
        for ax in axes:
            kept[ax] = 1
        gg = g if keepdims else reshape(g, tuple(kept))
        return broadcast_to(gg, orig)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), (vjp,))


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in ((axis,) if isinstance(axis, int) else axis)]
    )
    return div(sum_(a, axis=axis, keepdims=keepdims), constant(float(n)))


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    orig = a.data.shape
    return _make(
        np.broadcast_to(a.data, shape).copy(), (a,), (lambda g: _unbroadcast(g, orig),)
    )


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    vjps = []
    for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
        key = [slice(None)] * t.data.ndim
        key[axis] = slice(int(lo), int(hi))
        vjps.append(lambda g, key=tuple(key): slice_(g, key))
    return _make(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), tuple(vjps)
    )


def slice_(a, key) -> Tensor:
    a = as_tensor(a)
    orig = a.data.shape
    return _make(a.data[key], (a,), (lambda g: pad_slice(g, orig, key),))


def pad_slice(g, shape, key) -> Tensor:
    """Zeros of `shape` with `g` scattered into `shape[key]`; adjoint of slice_."""
    g = as_tensor(g)
    data = np.zeros(shape, dtype=g.data.dtype)
    data[key] = g.data
    return _make(data, (g,), (lambda h: slice_(h, key),))


def max_(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; backward routes to the first argmax (ties) with a
    constant mask, so the second derivative through the selection is 0."""
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)
    onehot = np.zeros_like(a.data)
    np.put_along_axis(onehot, np.expand_dims(idx, axis), 1.0, axis=axis)
    mask = constant(onehot)
    data = a.data.max(axis=axis, keepdims=keepdims)
    orig = a.data.shape

    def vjp(g):
        kept = list(orig)
        kept[axis] = 1
        gg = g if keepdims else reshape(g, tuple(kept))
        return mul(broadcast_to(gg, orig), mask)

    return _make(data, (a,), (vjp,))


def l2_norm_rows(a) -> Tensor:
    """Euclidean norm of each row of a 2-D tensor."""
    return sqrt(sum_(mul(a, a), axis=1))


def _toposort(root: Tensor) -> list[Tensor]:
    """Parents-before-children order (leaves first, root last)."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def grad(output: Tensor, wrt, create_graph: bool = False) -> list[Tensor]:
    """Gradients of a scalar output w.r.t. each tensor in `wrt`.

    With create_graph=True the returned tensors are differentiable again.
    Gradient branches that cannot reach any `wrt` tensor are not computed.
    """
    if output.data.size != 1:
        raise NotScalarOutput(f"output has {output.data.size} elements")
    topo = _toposort(output)
    needed: set[int] = {id(w) for w in wrt}
    for node in topo:
        if id(node) not in needed and any(id(p) in needed for p in node.parents):
            needed.add(id(node))
    grads: dict[int, Tensor] = {id(output): constant(np.ones_like(output.data))}
    with recording(create_graph):
        for node in reversed(topo):
            g = grads.get(id(node))
            if g is None:
                continue
            for parent, vjp in zip(node.parents, node.vjps):
                if id(parent) not in needed:
                    continue
                pg = vjp(g)
                held = grads.get(id(parent))
                grads[id(parent)] = pg if held is None else add(held, pg)
    return [grads.get(id(w), constant(np.zeros_like(w.data))) for w in wrt]


def grad_graph(output: Tensor, wrt) -> list[Tensor]:
    """grad() recording the backward pass for second-order differentiation."""
    return grad(output, wrt, create_graph=True)
