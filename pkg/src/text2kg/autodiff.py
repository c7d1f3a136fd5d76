"""Dense float64 tensors with reverse-mode automatic differentiation.

A dynamic tape: every operator records its parents and a backward closure
on the output tensor. Calling backward() on a scalar walks the recorded
graph in reverse topological order and accumulates gradients into the
leaf tensors that require them. All buffers are numpy float64 arrays;
numpy supplies the array arithmetic, the differentiation rules live here.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericalFault, ShapeError

Array = np.ndarray

_grad_enabled: bool = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (used for inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    """A dense float64 array with an optional gradient buffer and tape link."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data: Array = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Array], tuple[Array | None, ...]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def check_finite(self, what: str = "tensor") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise NumericalFault(f"non-finite values in {what}")
        return self

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # -- autograd ----------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad.

        self must be a scalar. Repeated calls keep accumulating.
        """
        if self.size != 1:
            raise ShapeError(f"backward: loss must be a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        grads: dict[int, Array] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return pow_const(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_tensor(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: Array, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Elementwise arithmetic (with numpy broadcasting)
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data
    return _result(
        data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data
    return _result(
        data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data
    return _result(
        data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data
    return _result(
        data, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,))


def pow_const(a, exponent: float) -> Tensor:
    """a ** exponent for a constant scalar exponent; d/da = p * a**(p-1).

    The derivative is exactly zero when exponent == 0, including at a == 0.
    """
    a = as_tensor(a)
    p = float(exponent)
    data = a.data ** p

    def bw(g):
        if p == 0.0:
            return (np.zeros_like(a.data),)
        return (g * p * a.data ** (p - 1.0),)

    return _result(data, (a,), bw)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)
    return _result(data, (a,), lambda g: (g * data,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)
    return _result(data, (a,), lambda g: (g * (1.0 - data * data),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _result(data, (a,), lambda g: (g * data * (1.0 - data),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    keep = a.data > 0
    return _result(np.where(keep, a.data, 0.0), (a,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# Linear algebra and shape ops
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >= 2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(data, (a, b), bw)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    data = a.data.reshape(shape)
    return _result(data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(data, tuple(ts), bw)


def slice_tensor(a, key) -> Tensor:
    """Basic (non-repeating) indexing with ints and slices."""
    a = as_tensor(a)
    data = a.data[key]

    def bw(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return (full,)

    return _result(data, (a,), bw)


def take(a, indices, axis: int) -> Tensor:
    """Select positions along one axis by an integer index array."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    data = np.take(a.data, idx, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        key = [slice(None)] * a.ndim
        key[axis] = idx
        np.add.at(full, tuple(key), g)
        return (full,)

    return _result(data, (a,), bw)


def gather_last(a, ids) -> Tensor:
    """out[...] = a[..., ids[...]]: pick one entry along the last axis."""
    a = as_tensor(a)
    ids = np.asarray(ids, dtype=np.intp)
    if ids.shape != a.shape[:-1]:
        raise ShapeError(f"gather_last: ids shape {ids.shape} != {a.shape[:-1]}")
    flat = a.data.reshape(-1, a.shape[-1])
    rows = np.arange(flat.shape[0])
    data = flat[rows, ids.reshape(-1)].reshape(ids.shape)

    def bw(g):
        full = np.zeros_like(flat)
        np.add.at(full, (rows, ids.reshape(-1)), g.reshape(-1))
        return (full.reshape(a.shape),)

    return _result(data, (a,), bw)


def mask_select(a, mask: Array) -> Tensor:
    """Select cells where a boolean mask over the leading axes is True."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape[: mask.ndim]:
        raise ShapeError(f"mask_select: mask shape {mask.shape} incompatible with {a.shape}")
    data = a.data[mask]

    def bw(g):
        full = np.zeros_like(a.data)
        full[mask] = g
        return (full,)

    return _result(data, (a,), bw)


def permute_slots(a, idx: Array) -> Tensor:
    """Reorder axis 1 per batch row: out[b, k] = a[b, idx[b, k]]."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 2 or idx.shape[0] != a.shape[0]:
        raise ShapeError(f"permute_slots: index shape {idx.shape} incompatible with {a.shape}")
    rows = np.arange(a.shape[0])[:, None]
    data = a.data[rows, idx]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, idx), g)
        return (full,)

    return _result(data, (a,), bw)


def embedding(weight, ids) -> Tensor:
    """Row lookup into an embedding matrix; gradient scatters into rows."""
    weight = as_tensor(weight)
    ids = np.asarray(ids, dtype=np.intp)
    data = weight.data[ids]

    def bw(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids, g)
        return (full,)

    return _result(data, (weight,), bw)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def _expand_reduced(g: Array, shape: tuple[int, ...], axis, keepdims: bool) -> Array:
    if axis is None:
        return np.broadcast_to(g, shape).copy() if g.shape != shape else g
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % len(shape) for a in axes)
    if not keepdims:
        for a in sorted(axes):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape).copy()


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    return _result(
        data, (a,), lambda g: (_expand_reduced(g, a.shape, axis, keepdims),)
    )


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod(
        [a.shape[ax % a.ndim] for ax in ((axis,) if isinstance(axis, int) else axis)]
    )

    def bw(g):
        return (_expand_reduced(g, a.shape, axis, keepdims) / count,)

    return _result(data, (a,), bw)


# ---------------------------------------------------------------------------
# Normalizations
# ---------------------------------------------------------------------------


def np_log_softmax(x: Array) -> Array:
    """Shared log-softmax over the last axis, also used outside the tape."""
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    data = np.exp(np_log_softmax(a.data))

    def bw(g):
        dot = (g * data).sum(axis=-1, keepdims=True)
        return (data * (g - dot),)

    return _result(data, (a,), bw)


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    data = np_log_softmax(a.data)

    def bw(g):
        return (g - np.exp(data) * g.sum(axis=-1, keepdims=True),)

    return _result(data, (a,), bw)


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    d = a.shape[-1]
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data

    def bw(g):
        dgain = _unbroadcast(g * xhat, gain.shape)
        dbias = _unbroadcast(g, bias.shape)
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgain, dbias

    return _result(data, (a, gain, bias), bw)


# ---------------------------------------------------------------------------
# Composite building blocks
# ---------------------------------------------------------------------------


def dropout(a, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; the mask is constant data on the tape."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return as_tensor(a)
    a = as_tensor(a)
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    return mul(a, Tensor(keep))


def attention(q, k, v, mask_add: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention over the last two axes.

    q: (..., Lq, dk), k/v: (..., Lk, dk). mask_add, when given, is added to
    the score matrix (large negative entries exclude positions). Returns
    (output, attention probabilities).
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    dk = q.shape[-1]
    scores = mul(matmul(q, transpose(k, _swap_last(k.ndim))), 1.0 / math.sqrt(dk))
    if mask_add is not None:
        scores = add(scores, mask_add)
    probs = softmax(scores)
    return matmul(probs, v), probs


def _swap_last(ndim: int) -> tuple[int, ...]:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def gru_cell(x, h, w_x, w_h, b_x, b_h) -> Tensor:
    """One step of the standard update/reset-gate recurrence.

    x: (..., d_in), h: (..., d). Weights pack the three gates side by side:
    w_x (d_in, 3d), w_h (d, 3d), biases (3d,) in [reset, update, candidate]
    order. Returns the next hidden state.
    """
    x, h = as_tensor(x), as_tensor(h)
    d = h.shape[-1]
    gx = add(matmul(x, w_x), b_x)
    gh = add(matmul(h, w_h), b_h)
    r = sigmoid(add(gx[..., 0:d], gh[..., 0:d]))
    z = sigmoid(add(gx[..., d:2 * d], gh[..., d:2 * d]))
    n = tanh(add(gx[..., 2 * d:3 * d], mul(r, gh[..., 2 * d:3 * d])))
    return add(mul(sub(1.0, z), n), mul(z, h))


# ---------------------------------------------------------------------------
# Initialization and seeding helpers
# ---------------------------------------------------------------------------

_RNG_TAGS = {"init": 1, "batch": 2, "dropout": 3, "sparse": 4, "data": 5, "test": 6}


def rng_for(seed: int, tag: str, step: int = 0) -> np.random.Generator:
    """A deterministic generator for (seed, purpose, step)."""
    key = _RNG_TAGS.get(tag)
    if key is None:
        raise ValueError(f"unknown rng tag {tag!r}")
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(key, step))
    )


def glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> Array:
    """Scaled uniform init over the last two dimensions (or vector length)."""
    if len(shape) >= 2:
        fan_in, fan_out = shape[-2], shape[-1]
    else:
        fan_in = fan_out = shape[0]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)
