"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the primitives needed by the survival losses are provided: affine maps,
leaky-ReLU, exp, log, clamping, log-softmax, log-sum-exp, concatenation and
reductions.  Broadcasting follows numpy; gradients are summed back to the
operand shape.
"""
from __future__ import annotations

import numpy as np


class Tensor:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")
    __array_ufunc__ = None  # make numpy defer to the reflected Tensor operators

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(lift(other)))

    def __rsub__(self, other):
        return add(lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf."""
        if self.value.size != 1:
            raise ValueError("backward() needs a scalar output")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.value)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.backward_fn is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.value.shape)
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg


def leaf(value, name=None):
    """Trainable leaf; ``name`` is informational only."""
    return Tensor(value, requires_grad=True)


def lift(x):
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float, np.ndarray, np.floating, np.integer)):
        return Tensor(x)
    raise TypeError(f"unsupported operand for Tensor graph: {type(x).__name__}")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = lift(a), lift(b)
    return Tensor(a.value + b.value, (a, b), lambda g: (g, g))


def neg(a):
    return Tensor(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = lift(a), lift(b)
    av, bv = a.value, b.value
    return Tensor(av * bv, (a, b), lambda g: (g * bv, g * av))


def matmul(a, b):
    a, b = lift(a), lift(b)
    av, bv = a.value, b.value
    if bv.ndim == 1:
        return Tensor(av @ bv, (a, b), lambda g: (np.multiply.outer(g, bv), av.T @ g))
    return Tensor(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def exp(a):
    a = lift(a)
    out = np.exp(a.value)
    return Tensor(out, (a,), lambda g: (g * out,))


def log(a):
    a = lift(a)
    av = a.value
    return Tensor(np.log(av), (a,), lambda g: (g / av,))


def square(a):
    a = lift(a)
    av = a.value
    return Tensor(av * av, (a,), lambda g: (2.0 * g * av,))


def leaky_relu(a, slope=0.2):
    a = lift(a)
    pos = a.value > 0
    scale = np.where(pos, 1.0, slope)
    return Tensor(a.value * scale, (a,), lambda g: (g * scale,))


def clip(a, lo, hi):
    """Hard clamp; the gradient is zero where the clamp is active."""
    a = lift(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return Tensor(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


def sum(a, axis=None, keepdims=False):  # noqa: A001
    a = lift(a)
    shape = a.value.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor(a.value.sum(axis=axis, keepdims=keepdims), (a,), bw)


def mean(a, axis=None):
    a = lift(a)
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / n)


def logsumexp(a, axis=-1):
    """log Σ exp along ``axis``; ``-inf`` entries are allowed as masks."""
    a = lift(a)
    av = a.value
    m = np.max(av, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(av - m)
    tot = s.sum(axis=axis, keepdims=True)
    out = np.log(tot) + m
    weights = s / tot

    def bw(g):
        return (np.expand_dims(g, axis) * weights,)

    return Tensor(np.squeeze(out, axis=axis), (a,), bw)


def log_softmax(a, axis=-1):
    a = lift(a)
    av = a.value
    m = av.max(axis=axis, keepdims=True)
    shifted = av - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return Tensor(out, (a,), bw)


def concat(tensors, axis=-1):
    ts = [lift(t) for t in tensors]
    sizes = [t.value.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return Tensor(np.concatenate([t.value for t in ts], axis=axis), tuple(ts), bw)


def reshape(a, shape):
    a = lift(a)
    old = a.value.shape
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def split_last(a, k):
    """Return ``(a[..., :k], a[..., k:])`` as two graph nodes."""
    a = lift(a)
    width = a.value.shape[-1]

    def head_bw(g):
        full = np.zeros(a.value.shape)
        full[..., :k] = g
        return (full,)

    def tail_bw(g):
        full = np.zeros(a.value.shape)
        full[..., k:] = g
        return (full,)

    if not 0 < k < width:
        raise ValueError(f"cannot split width {width} at {k}")
    return (Tensor(a.value[..., :k], (a,), head_bw), Tensor(a.value[..., k:], (a,), tail_bw))


def gradients(loss_fn, params):
    """Evaluate ``loss_fn`` on tape leaves built from ``params``.

    ``params`` maps names to arrays.  Returns ``(loss_value, grads)`` with one
    gradient array per name (zeros for parameters the loss does not touch).
    """
    leaves = {k: leaf(v) for k, v in params.items()}
    out = loss_fn(leaves)
    out.backward()
    grads = {
        k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in leaves.items()
    }
    return float(out.value), grads


def finite_difference(loss_fn, params, eps=1e-5):
    """Central differences of a numpy-valued ``loss_fn(params)``; test oracle."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = loss_fn(params)
            flat[i] = old - eps
            down = loss_fn(params)
            flat[i] = old
            g.reshape(-1)[i] = (up - down) / (2 * eps)
        grads[name] = g
    return grads
