"""Tape-based reverse-mode automatic differentiation over dense float64 arrays.

Operations executed inside an active :class:`Tape` are recorded in execution
order; :func:`backward` replays that record in reverse.  Outside a tape every
operation is a plain forward computation, which is what evaluation uses.

    >>> w = Tensor(np.ones((2, 2)), requires_grad=True)
    >>> with Tape():
    ...     loss = sum_(w)
    >>> backward(loss)
    >>> w.grad
    array([[1., 1.],
           [1., 1.]])
"""
from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64

_ids = itertools.count()
_active: list["Tape"] = []


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class EmptyNeighborhoodError(ValueError):
    """A softmax row has no unmasked entry."""


class TapeError(RuntimeError):
    """Misuse of the computation tape (double backward, non-scalar loss, ...)."""


class Tensor:
    """Dense array node.  ``grad`` exists only for tensors that require grad."""

    __slots__ = ("value", "grad", "requires_grad", "name", "id", "_parents", "_backward", "_tape")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.value) if requires_grad else None
        self.name = name
        self.id = next(_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.value)

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return index_(self, index)


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended when created, so the record is topologically sorted by
    construction.  A tape can be replayed once.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)


def current_tape() -> Tape | None:
    return _active[-1] if _active else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _any_grad(parents) -> bool:
    for p in parents:
        if p.requires_grad:
            return True
    return False


def _node(value: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.value = value
    out.name = None
    out.id = next(_ids)
    tape = _active[-1] if _active else None
    if tape is not None and _any_grad(parents):
        out.requires_grad = True
        out.grad = None
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._tape = tape
        tape.nodes.append(out)
    else:
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward = None
        out._tape = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE, copy=True).reshape(t.value.shape)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every requires-grad tensor that reaches ``loss``.

    Leaf tensors (parameters) accumulate across calls; intermediate nodes are
    written once per tape.
    """
    if loss.value.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise TapeError("loss was not recorded on a tape")
    if tape.consumed:
        raise TapeError("tape has already been replayed; record a new one")
    tape.consumed = True
    loss.grad = np.ones_like(loss.value)
    nodes = tape.nodes
    stop = nodes.index(loss) if nodes[-1] is not loss else len(nodes) - 1
    for k in range(stop, -1, -1):
        node = nodes[k]
        if node.grad is not None:
            node._backward(node.grad)


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.value.shape, b.value.shape

    def bw(g):
        _accum(a, _unbroadcast(g, sa))
        _accum(b, _unbroadcast(g, sb))

    return _node(a.value + b.value, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.value.shape, b.value.shape

    def bw(g):
        _accum(a, _unbroadcast(g, sa))
        _accum(b, -_unbroadcast(g, sb))

    return _node(a.value - b.value, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * bv, av.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * av, bv.shape))

    return _node(av * bv, (a, b), bw)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.value)

    def bw(g):
        _accum(x, g * out * (1.0 - out))

    return _node(out, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.value)

    def bw(g):
        _accum(x, g * (1.0 - out * out))

    return _node(out, (x,), bw)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"slope must lie in (0, 1), got {slope}")
    v = x.value
    pos = v > 0
    out = np.where(pos, v, slope * v)

    def bw(g):
        _accum(x, np.where(pos, g, slope * g))

    return _node(out, (x,), bw)


# -- linear algebra and shape ----------------------------------------------------

def matmul(a, b) -> Tensor:
    """``a @ b`` with numpy semantics; ``b`` may carry batch dimensions too."""
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    inner_b = bv.shape[0] if bv.ndim == 1 else bv.shape[-2]
    if av.ndim == 0 or bv.ndim == 0 or av.shape[-1] != inner_b:
        raise ShapeError(f"matmul: cannot multiply shapes {av.shape} and {bv.shape}")
    out = av @ bv

    def bw(g):
        if av.ndim == 1 and bv.ndim == 1:
            _accum(a, g * bv)
            _accum(b, g * av)
            return
        # promote vectors to matrices the way numpy does, then demote the grads
        a2 = av[None, :] if av.ndim == 1 else av
        b2 = bv[:, None] if bv.ndim == 1 else bv
        g2 = g[..., None, :] if av.ndim == 1 else g
        if bv.ndim == 1:
            g2 = g2[..., None]
        if a.requires_grad:
            ga = _unbroadcast(g2 @ np.swapaxes(b2, -1, -2), a2.shape)
            _accum(a, ga.reshape(av.shape))
        if b.requires_grad:
            if b2.ndim == 2:
                k, n = b2.shape
                gb = a2.reshape(-1, k).T @ g2.reshape(-1, n)
            else:
                gb = _unbroadcast(np.swapaxes(a2, -1, -2) @ g2, b2.shape)
            _accum(b, gb.reshape(bv.shape))

    return _node(out, (a, b), bw)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    """Permute axes; default swaps the last two."""
    if axes is None:
        axes = list(range(x.ndim))
        axes[-2], axes[-1] = axes[-1], axes[-2]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def bw(g):
        _accum(x, np.transpose(g, inverse))

    return _node(np.transpose(x.value, axes), (x,), bw)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.value.shape

    def bw(g):
        _accum(x, g.reshape(src))

    return _node(x.value.reshape(shape), (x,), bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    values = [t.value for t in tensors]
    out = np.concatenate(values, axis=axis)
    bounds = list(itertools.accumulate(v.shape[axis] for v in values))
    ax = axis % out.ndim

    def bw(g):
        start = 0
        for t, stop in zip(tensors, bounds):
            if t.requires_grad:
                _accum(t, g[(slice(None),) * ax + (slice(start, stop),)])
            start = stop

    return _node(out, tensors, bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.value for t in tensors], axis=axis)

    def bw(g):
        for k, t in enumerate(tensors):
            _accum(t, np.take(g, k, axis=axis))

    return _node(out, tensors, bw)


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def index_(x: Tensor, index) -> Tensor:
    """``x[index]`` for basic or integer-array indices; repeated indices accumulate."""
    basic = _is_basic(index)
    if not basic:
        index = tuple(np.asarray(p) if isinstance(p, (list, np.ndarray)) else p
                      for p in (index if isinstance(index, tuple) else (index,)))
    src = x.value

    def bw(g):
        full = np.zeros_like(src)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        _accum(x, full)

    return _node(src[index], (x,), bw)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` selected by integer ``ids`` (any shape)."""
    ids = np.asarray(ids, dtype=np.int64)
    n = table.value.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"embedding id out of range [0, {n})")
    return index_(table, ids)


def sum_(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    src = x.value.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, src))

    return _node(np.sum(x.value, axis=axis, keepdims=keepdims), (x,), bw)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.value.size if axis is None else x.value.shape[axis]
    return mul(sum_(x, axis=axis), 1.0 / n)


def argmax(x: Tensor | np.ndarray, axis: int = -1) -> np.ndarray:
    """Forward-only; ties resolve to the lowest index."""
    v = x.value if isinstance(x, Tensor) else np.asarray(x)
    return np.argmax(v, axis=axis)


# -- normalisation and losses ------------------------------------------------------

def masked_softmax(scores: Tensor, mask=None, empty: str = "raise") -> Tensor:
    """Softmax over the last axis restricted to ``mask``.

    Masked positions are exactly zero.  Rows whose mask is all false raise
    :class:`EmptyNeighborhoodError`, or become all-zero rows when
    ``empty="zero"``.
    """
    v = scores.value
    if mask is None:
        ex = np.exp(v - v.max(axis=-1, keepdims=True))
        out = ex / ex.sum(axis=-1, keepdims=True)

        def bw_plain(g):
            inner = (g * out).sum(axis=-1, keepdims=True)
            _accum(scores, out * (g - inner))

        return _node(out, (scores,), bw_plain)
    m = np.broadcast_to(np.asarray(mask, dtype=bool), v.shape)
    nonempty = m.any(axis=-1, keepdims=True)
    if not nonempty.all():
        if empty == "raise":
            raise EmptyNeighborhoodError("softmax over an empty mask")
        if empty != "zero":
            raise ValueError(f"unknown empty-row policy {empty!r}")
    shifted = np.where(m, v, -np.inf)
    top = np.max(shifted, axis=-1, keepdims=True)
    top = np.where(nonempty, top, 0.0)
    ex = np.where(m, np.exp(np.where(m, v - top, 0.0)), 0.0)
    total = ex.sum(axis=-1, keepdims=True)
    out = ex / np.where(nonempty, total, 1.0)

    def bw(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        _accum(scores, out * (g - inner))

    return _node(out, (scores,), bw)


def softmax(scores: Tensor) -> Tensor:
    return masked_softmax(scores)


def log_softmax_values(v: np.ndarray) -> np.ndarray:
    top = v.max(axis=-1, keepdims=True)
    return v - top - np.log(np.exp(v - top).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, gold) -> Tensor:
    """Negative log-likelihood of ``gold`` under softmax(logits).

    ``logits`` of shape (C,) takes an int; shape (n, C) takes n ints and
    returns the mean over rows.
    """
    v = logits.value
    gold = np.asarray(gold, dtype=np.int64)
    C = v.shape[-1]
    if gold.size and (gold.min() < 0 or gold.max() >= C):
        raise IndexError(f"gold class out of range [0, {C})")
    if v.ndim == 1:
        if gold.ndim != 0:
            raise ShapeError("one-dimensional logits take a single gold index")
        rows, picks = v[None, :], gold[None]
    else:
        if gold.shape != v.shape[:1]:
            raise ShapeError(f"gold shape {gold.shape} does not match logits {v.shape}")
        rows, picks = v, gold
    logp = log_softmax_values(rows)
    n = rows.shape[0]
    loss = -logp[np.arange(n), picks].sum() / n

    def bw(g):
        grad = np.exp(logp)
        grad[np.arange(n), picks] -= 1.0
        _accum(logits, (g / n) * grad.reshape(v.shape))

    return _node(np.asarray(loss), (logits,), bw)


# -- fused recurrent cell --------------------------------------------------------------

def lstm_cell(xw: Tensor, h: Tensor | None, c: Tensor | None, W_h: Tensor) -> Tensor:
    """One LSTM step, returning ``[h_new ; c_new]`` along the last axis.

    ``xw`` already holds the input projection plus bias, gate order i, f, o, g.
    ``h``/``c`` of ``None`` mean a zero initial state.  Equivalent to composing
    matmul, sigmoid, tanh, mul and add, with a single tape entry.
    """
    H = W_h.value.shape[0]
    gates = xw.value if h is None else xw.value + h.value @ W_h.value
    sig = _sigmoid(gates[..., : 3 * H])
    i, f, o = sig[..., :H], sig[..., H: 2 * H], sig[..., 2 * H:]
    g = np.tanh(gates[..., 3 * H:])
    c_prev = 0.0 if c is None else c.value
    c_new = f * c_prev + i * g
    tc = np.tanh(c_new)
    out = np.concatenate([o * tc, c_new], axis=-1)
    parents = [xw, W_h] + [t for t in (h, c) if t is not None]

    def bw(grad):
        dh, dc = grad[..., :H], grad[..., H:]
        dc = dc + dh * o * (1.0 - tc * tc)
        dgates = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ], axis=-1)
        _accum(xw, dgates)
        if h is not None:
            if W_h.requires_grad:
                _accum(W_h, h.value.reshape(-1, H).T @ dgates.reshape(-1, 4 * H))
            _accum(h, dgates @ W_h.value.T)
        if c is not None:
            _accum(c, dc * f)

    return _node(out, parents, bw)


def lstm_sequence(xw: Tensor, W_h: Tensor, reverse: bool = False) -> Tensor:
    """Hidden states of an LSTM run over ``xw`` of shape ``(..., T, 4H)`` from a zero state.

    Same arithmetic as chaining :func:`lstm_cell` step by step, recorded as one
    tape entry with backpropagation through time in its backward rule.
    """
    H = W_h.value.shape[0]
    T = xw.value.shape[-2]
    order = list(range(T - 1, -1, -1)) if reverse else list(range(T))
    out = np.empty(xw.value.shape[:-1] + (H,))
    cache = []
    h = c = None
    for t in order:
        gates = xw.value[..., t, :] if h is None else xw.value[..., t, :] + h @ W_h.value
        sig = _sigmoid(gates[..., : 3 * H])
        i, f, o = sig[..., :H], sig[..., H: 2 * H], sig[..., 2 * H:]
        g = np.tanh(gates[..., 3 * H:])
        c_prev, h_prev = c, h
        c = i * g if c_prev is None else f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        out[..., t, :] = h
        cache.append((i, f, o, g, tc, c_prev, h_prev))

    def bw(grad):
        dxw = np.empty_like(xw.value)
        dW = np.zeros_like(W_h.value)
        dh_next = dc_next = 0.0
        for t, (i, f, o, g, tc, c_prev, h_prev) in zip(reversed(order), reversed(cache)):
            dh = grad[..., t, :] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dgates = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * (0.0 if c_prev is None else c_prev) * f * (1.0 - f),
                dh * tc * o * (1.0 - o),
                dc * i * (1.0 - g * g),
            ], axis=-1)
            dxw[..., t, :] = dgates
            if h_prev is not None:
                dW += h_prev.reshape(-1, H).T @ dgates.reshape(-1, 4 * H)
                dh_next = dgates @ W_h.value.T
                dc_next = dc * f
        _accum(xw, dxw)
        _accum(W_h, dW)

    return _node(out, (xw, W_h), bw)
