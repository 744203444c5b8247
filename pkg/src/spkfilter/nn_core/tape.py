"""Reverse-mode autodiff over an explicit gradient tape.

Values are float64 numpy arrays wrapped in :class:`Tensor`. While a
:class:`Tape` is active, every op appends its result to the tape in creation
order, which is already a valid topological order; ``backward`` walks the
tape once in reverse. With no active tape the same ops run as plain numpy
(inference mode) and build no graph.

Tapes are per-stream state: one tape per training example, never shared
between threads.
"""

from __future__ import annotations

import numpy as np

from ..errors import UsageError

_ACTIVE: list["Tape"] = []


class Tensor:
    """A float64 array plus (optionally) a gradient slot and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Records op outputs in creation order for one forward/backward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE.pop()
        return False


def tape_active() -> bool:
    return bool(_ACTIVE)


def backward(loss: Tensor, tape: Tape):
    """Seed d(loss)/d(loss)=1 and propagate through the tape in reverse."""
    if loss.data.ndim != 0:
        raise UsageError("backward expects a scalar loss")
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(tape.nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)


def _result(data, bwd_factory, *parents) -> Tensor:
    """Wrap an op result; attach a backward closure only when it can matter."""
    out = Tensor(data)
    if _ACTIVE and any(isinstance(p, Tensor) and p.requires_grad for p in parents):
        out.requires_grad = True
        out._backward = bwd_factory()
        _ACTIVE[-1].nodes.append(out)
    return out


def _acc(t: Tensor, g):
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _acc_at(t: Tensor, key, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad[key] += g


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    """Elementwise sum. ``b`` may be a 1-D bias broadcast over the rows of 2-D ``a``."""
    da, db = _data(a), _data(b)
    out = da + db

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc(a, g if da.shape == out.shape else _unbroadcast(g, da.shape))
            if isinstance(b, Tensor) and b.requires_grad:
                _acc(b, g if db.shape == out.shape else _unbroadcast(g, db.shape))
        return bwd

    return _result(out, factory, a, b)


def sub(a, b):
    da, db = _data(a), _data(b)
    out = da - db

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc(a, g if da.shape == out.shape else _unbroadcast(g, da.shape))
            if isinstance(b, Tensor) and b.requires_grad:
                gb = -g
                _acc(b, gb if db.shape == out.shape else _unbroadcast(gb, db.shape))
        return bwd

    return _result(out, factory, a, b)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (bias-style broadcasting only)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def mul(a, b):
    """Elementwise product; either side may be a constant array or scalar."""
    da, db = _data(a), _data(b)
    out = da * db

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                ga = g * db
                _acc(a, ga if da.shape == out.shape else _unbroadcast(ga, da.shape))
            if isinstance(b, Tensor) and b.requires_grad:
                gb = g * da
                _acc(b, gb if db.shape == out.shape else _unbroadcast(gb, db.shape))
        return bwd

    return _result(out, factory, a, b)


def scale(a, s: float):
    """Multiply by a python scalar constant."""
    da = _data(a)
    out = da * s

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc(a, g * s)
        return bwd

    return _result(out, factory, a)


def matmul(a, b):
    """Matrix product for the 2Dx2D, 2Dx1D and 1Dx2D cases."""
    da, db = _data(a), _data(b)
    out = da @ db

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                if da.ndim == 2 and db.ndim == 2:
                    _acc(a, g @ db.T)
                elif da.ndim == 2 and db.ndim == 1:
                    _acc(a, np.outer(g, db))
                else:  # 1D @ 2D
                    _acc(a, db @ g)
            if isinstance(b, Tensor) and b.requires_grad:
                if da.ndim == 2 and db.ndim == 2:
                    _acc(b, da.T @ g)
                elif da.ndim == 2 and db.ndim == 1:
                    _acc(b, da.T @ g)
                else:
                    _acc(b, np.outer(da, g))
        return bwd

    return _result(out, factory, a, b)


def matmul_t(a, b):
    """``a @ b.T`` for 2-D ``a`` and ``b`` (the batched fully-connected case)."""
    da, db = _data(a), _data(b)
    out = da @ db.T

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc(a, g @ db)
            if isinstance(b, Tensor) and b.requires_grad:
                _acc(b, g.T @ da)
        return bwd

    return _result(out, factory, a, b)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def concat(parts):
    """Concatenate 1-D vectors."""
    datas = [_data(p) for p in parts]
    out = np.concatenate(datas)

    def factory():
        offsets = np.cumsum([0] + [d.shape[0] for d in datas])

        def bwd(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if isinstance(p, Tensor) and p.requires_grad:
                    _acc(p, g[lo:hi])
        return bwd

    return _result(out, factory, *parts)


def concat_cols(a, b):
    """Column-wise concat of 2-D blocks; a 1-D ``b`` is broadcast to every row."""
    da, db = _data(a), _data(b)
    if db.ndim == 1:
        db_full = np.broadcast_to(db, (da.shape[0], db.shape[0]))
    else:
        db_full = db
    out = np.concatenate([da, db_full], axis=1)
    k = da.shape[1]

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc(a, g[:, :k])
            if isinstance(b, Tensor) and b.requires_grad:
                gb = g[:, k:]
                _acc(b, gb.sum(axis=0) if db.ndim == 1 else gb)
        return bwd

    return _result(out, factory, a, b)


def stack_rows(parts):
    """Stack 1-D vectors into a 2-D matrix, one per row."""
    out = np.stack([_data(p) for p in parts])

    def factory():
        def bwd(g):
            for i, p in enumerate(parts):
                if isinstance(p, Tensor) and p.requires_grad:
                    _acc(p, g[i])
        return bwd

    return _result(out, factory, *parts)


def row(a, i: int):
    """Select row ``i`` of a 2-D tensor."""
    out = _data(a)[i]

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc_at(a, i, g)
        return bwd

    return _result(out, factory, a)


def narrow(a, lo: int, hi: int):
    """Slice [lo:hi] along the last axis."""
    da = _data(a)
    out = da[..., lo:hi]

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc_at(a, (Ellipsis, slice(lo, hi)), g)
        return bwd

    return _result(out, factory, a)


def col(a, j: int):
    """Select column ``j`` of a 2-D tensor."""
    out = _data(a)[:, j]

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc_at(a, (slice(None), j), g)
        return bwd

    return _result(out, factory, a)


def sum_all(a):
    """Sum of all elements, as a 0-d tensor."""
    da = _data(a)
    out = da.sum()

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc(a, np.full(da.shape, float(g)))
        return bwd

    return _result(out, factory, a)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def _sigmoid_raw(x):
    # branch on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    y = _sigmoid_raw(_data(a))

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc(a, g * y * (1.0 - y))
        return bwd

    return _result(y, factory, a)


def tanh(a):
    y = np.tanh(_data(a))

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc(a, g * (1.0 - y * y))
        return bwd

    return _result(y, factory, a)


def relu(a):
    da = _data(a)
    y = np.maximum(da, 0.0)

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc(a, g * (da > 0.0))
        return bwd

    return _result(y, factory, a)


def log(a):
    da = _data(a)
    y = np.log(da)

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc(a, g / da)
        return bwd

    return _result(y, factory, a)


def clip(a, lo: float, hi: float):
    """Clamp to [lo, hi]; gradient passes only where the clamp is inactive."""
    da = _data(a)
    y = np.clip(da, lo, hi)

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc(a, g * ((da >= lo) & (da <= hi)))
        return bwd

    return _result(y, factory, a)


def softmax(a):
    """Stable softmax: over the vector (1-D) or over each row (2-D).

    Max-subtraction keeps exp in range; the subtracted max is treated as a
    constant, which leaves both the value and the gradient unchanged.
    """
    da = _data(a)
    if da.size == 0:
        raise UsageError("softmax of an empty score vector")
    if da.ndim == 1:
        z = da - da.max()
        e = np.exp(z)
        y = e / e.sum()
    else:
        z = da - da.max(axis=1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=1, keepdims=True)

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                if y.ndim == 1:
                    _acc(a, y * (g - np.dot(g, y)))
                else:
                    _acc(a, y * (g - (g * y).sum(axis=1, keepdims=True)))
        return bwd

    return _result(y, factory, a)


def rowmax(a):
    """Per-row maximum of a 2-D tensor (1-D input: overall max).

    Subgradient goes to the first argmax of each row.
    """
    da = _data(a)
    if da.ndim == 1:
        idx = int(np.argmax(da))
        out = da[idx]

        def factory():
            def bwd(g):
                if isinstance(a, Tensor) and a.requires_grad:
                    _acc_at(a, idx, g)
            return bwd

        return _result(out, factory, a)

    idx = np.argmax(da, axis=1)
    out = da[np.arange(da.shape[0]), idx]

    def factory():
        def bwd(g):
            if isinstance(a, Tensor) and a.requires_grad:
                _acc_at(a, (np.arange(da.shape[0]), idx), g)
        return bwd

    return _result(out, factory, a)
