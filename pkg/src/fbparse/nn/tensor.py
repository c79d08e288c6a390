"""Reverse-mode differentiation over numpy arrays.

Every op accepts either a ``Tensor`` (recorded on its tape) or a plain
``ndarray`` (computed directly, nothing recorded). Model code is written once
against these ops and runs in both modes: on a tape for training, on raw
arrays (optionally with a leading batch axis) for sampling and search.
"""
from __future__ import annotations

from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "tape", "name", "index")

    def __init__(self, value, tape: "Tape", parents=(), backward_fn=None, name=None):
        self.value = value
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.tape = tape
        self.name = name
        self.index = -1

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.value.shape})"


def _acc(node, g) -> None:
    if node.grad is None:
        node.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        node.grad += g


def value(x):
    return x.value if isinstance(x, Tensor) else x


def _tape_of(*xs) -> Optional["Tape"]:
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    return None


class Tape:
    """Records one forward pass; ``backward`` walks it once in reverse."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.leaves: dict[str, Tensor] = {}

    def record(self, val, parents, backward_fn) -> Tensor:
        node = Tensor(val, self, parents, backward_fn)
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def leaf(self, name: str, val: np.ndarray) -> Tensor:
        node = self.leaves.get(name)
        if node is None:
            node = Tensor(val, self, name=name)
            node.index = len(self.nodes)
            self.nodes.append(node)
            self.leaves[name] = node
        return node

    def bind(self, params: Mapping[str, np.ndarray]) -> "BoundParams":
        return BoundParams(self, params)

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise ValueError("loss is not a node recorded on this tape")
        if loss.value.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        for n in self.nodes:
            n.grad = None
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes[: loss.index + 1]):
            if node.grad is not None and node.backward_fn is not None:
                node.backward_fn(node.grad)
        return {
            name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value))
            for name, leaf in self.leaves.items()
        }


class BoundParams(Mapping):
    """Lazily wraps parameter arrays as tape leaves on first access."""

    def __init__(self, tape: Tape, params: Mapping[str, np.ndarray]):
        self.tape = tape
        self.params = params

    def __getitem__(self, name):
        return self.tape.leaf(name, self.params[name])

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)


def _check(cond: bool, op: str, *shapes) -> None:
    if not cond:
        raise ShapeError(f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}")


# ---------------------------------------------------------------- primitives


def embed(table, ids):
    """Rows of ``table`` at integer ``ids`` (scalar or 1-D)."""
    tv = value(table)
    ids = np.asarray(ids, dtype=np.int64)
    _check(tv.ndim == 2 and (ids.size == 0 or ids.max() < tv.shape[0]), "embed", tv.shape, ids.shape)
    out = tv[ids]
    if not isinstance(table, Tensor):
        return out

    def back(g):
        gt = np.zeros_like(tv)
        np.add.at(gt, ids, g)
        _acc(table, gt)

    return table.tape.record(out, (table,), back)


def matmul(a, b):
    av, bv = value(a), value(b)
    _check(av.shape[-1] == bv.shape[0], "matmul", av.shape, bv.shape)
    out = av @ bv
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def back(g):
        if isinstance(a, Tensor):
            if bv.ndim == 1:
                ga = np.multiply.outer(g, bv)
            else:
                ga = g @ bv.T
            _acc(a, ga)
        if isinstance(b, Tensor):
            if av.ndim == 1:
                gb = np.multiply.outer(av, g)
            elif bv.ndim == 1:
                gb = av.T @ g
            else:
                gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            _acc(b, gb)

    return tape.record(out, (a, b), back)


def add(a, b):
    """Elementwise sum; ``b`` may be a bias row broadcast over leading axes."""
    av, bv = value(a), value(b)
    _check(av.shape == bv.shape or av.shape[-bv.ndim:] == bv.shape, "add", av.shape, bv.shape)
    out = av + bv
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def back(g):
        if isinstance(a, Tensor):
            _acc(a, g)
        if isinstance(b, Tensor):
            _acc(b, g if g.shape == bv.shape else g.reshape(-1, *bv.shape).sum(axis=0))

    return tape.record(out, (a, b), back)


def affine(x, W, b=None):
    out = matmul(x, W)
    return out if b is None else add(out, b)


def concat(xs: Sequence, axis: int = -1):
    vals = [value(x) for x in xs]
    try:
        out = np.concatenate(vals, axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[v.shape for v in vals]}") from None
    tape = _tape_of(*xs)
    if tape is None:
        return out
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def back(g):
        for x, gx in zip(xs, np.split(g, sizes, axis=axis)):
            if isinstance(x, Tensor):
                _acc(x, gx)

    return tape.record(out, tuple(xs), back)


def slice_last(x, start: int, stop: int):
    xv = value(x)
    out = xv[..., start:stop]
    if not isinstance(x, Tensor):
        return out

    def back(g):
        gx = np.zeros_like(xv)
        gx[..., start:stop] = g
        _acc(x, gx)

    return x.tape.record(out, (x,), back)


def row(x, i: int):
    xv = value(x)
    out = xv[i]
    if not isinstance(x, Tensor):
        return out

    def back(g):
        gx = np.zeros_like(xv)
        gx[i] = g
        _acc(x, gx)

    return x.tape.record(out, (x,), back)


def tanh(x):
    out = np.tanh(value(x))
    if not isinstance(x, Tensor):
        return out
    return x.tape.record(out, (x,), lambda g: _acc(x, g * (1.0 - out * out)))


def _sigmoid(v):
    return 0.5 * (np.tanh(0.5 * v) + 1.0)


def sigmoid(x):
    out = _sigmoid(value(x))
    if not isinstance(x, Tensor):
        return out
    return x.tape.record(out, (x,), lambda g: _acc(x, g * out * (1.0 - out)))


def _logsumexp(v, axis=-1, keepdims=False):
    m = np.max(v, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True)) + m
    return s if keepdims else np.squeeze(s, axis=axis)


def _softmax(v):
    e = np.exp(v - np.max(v, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x):
    out = _softmax(value(x))
    if not isinstance(x, Tensor):
        return out

    def back(g):
        _acc(x, out * (g - np.sum(g * out, axis=-1, keepdims=True)))

    return x.tape.record(out, (x,), back)


def log_softmax(x):
    xv = value(x)
    out = xv - _logsumexp(xv, keepdims=True)
    if not isinstance(x, Tensor):
        return out
    p = np.exp(out)

    def back(g):
        _acc(x, g - p * np.sum(g, axis=-1, keepdims=True))

    return x.tape.record(out, (x,), back)


def logsumexp(x):
    """Overflow-safe log(sum(exp(x))) over the last axis."""
    xv = value(x)
    out = _logsumexp(xv)
    if not isinstance(x, Tensor):
        return out
    p = np.exp(xv - out[..., None]) if xv.ndim > 1 else np.exp(xv - out)

    def back(g):
        _acc(x, p * (g[..., None] if np.ndim(g) else g))

    return x.tape.record(np.asarray(out), (x,), back)


def log_marginal(logits, index):
    """log of the total softmax mass of ``logits`` on the positions ``index``.

    Scores one surface token that several routes (generate, copy) can emit.
    """
    lv = value(logits)
    index = np.asarray(index, dtype=np.int64)
    _check(lv.ndim == 1 and index.size > 0, "log_marginal", lv.shape, index.shape)
    total = _logsumexp(lv)
    part = _logsumexp(lv[index])
    out = np.asarray(part - total)
    if not isinstance(logits, Tensor):
        return out

    def back(g):
        gx = -np.exp(lv - total)
        gx[index] += np.exp(lv[index] - part)
        _acc(logits, g * gx)

    return logits.tape.record(out, (logits,), back)


def bilinear(s, W, h):
    """s^T W h; ``h`` may be a matrix of row vectors giving one score per row."""
    sv, Wv, hv = value(s), value(W), value(h)
    _check(sv.shape[-1] == Wv.shape[0] and hv.shape[-1] == Wv.shape[1], "bilinear", sv.shape, Wv.shape, hv.shape)
    q = sv @ Wv
    out = q @ hv.T if hv.ndim == 2 else q @ hv
    tape = _tape_of(s, W, h)
    if tape is None:
        return out
    _check(sv.ndim == 1, "bilinear (recorded)", sv.shape)

    def back(g):
        if hv.ndim == 2:
            gq = g @ hv
            gh = np.multiply.outer(g, q)
        else:
            gq = g * hv
            gh = g * q
        if isinstance(s, Tensor):
            _acc(s, Wv @ gq)
        if isinstance(W, Tensor):
            _acc(W, np.multiply.outer(sv, gq))
        if isinstance(h, Tensor):
            _acc(h, gh)

    return tape.record(np.asarray(out), (s, W, h), back)


def mul(a, b):
    av, bv = value(a), value(b)
    _check(av.shape == bv.shape, "mul", av.shape, bv.shape)
    out = av * bv
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def back(g):
        if isinstance(a, Tensor):
            _acc(a, g * bv)
        if isinstance(b, Tensor):
            _acc(b, g * av)

    return tape.record(out, (a, b), back)


def scale(x, c: float):
    out = value(x) * c
    if not isinstance(x, Tensor):
        return out
    return x.tape.record(out, (x,), lambda g: _acc(x, g * c))


def total(x):
    xv = value(x)
    out = np.asarray(xv.sum())
    if not isinstance(x, Tensor):
        return out
    return x.tape.record(out, (x,), lambda g: _acc(x, np.full_like(xv, g)))


def add_n(xs: Sequence):
    vals = [value(x) for x in xs]
    out = vals[0].copy()
    for v in vals[1:]:
        _check(v.shape == out.shape, "add_n", out.shape, v.shape)
        out = out + v
    tape = _tape_of(*xs)
    if tape is None:
        return out

    def back(g):
        for x in xs:
            if isinstance(x, Tensor):
                _acc(x, g)

    return tape.record(out, tuple(xs), back)


# ----------------------------------------------------------- recurrent cells


def _gates(z, H):
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H : 2 * H])
    g = np.tanh(z[..., 2 * H : 3 * H])
    o = _sigmoid(z[..., 3 * H :])
    return i, f, g, o


def lstm_step(x, hc, Wx, Wh, b):
    """One gated-cell step. State ``hc`` is [hidden; cell] of width 2H."""
    xv, hcv, Wxv, Whv, bv = (value(t) for t in (x, hc, Wx, Wh, b))
    H = Whv.shape[0]
    _check(
        Wxv.shape == (xv.shape[-1], 4 * H) and Whv.shape == (H, 4 * H) and bv.shape == (4 * H,)
        and hcv.shape[-1] == 2 * H and hcv.shape[:-1] == xv.shape[:-1],
        "lstm_step", xv.shape, hcv.shape, Wxv.shape, Whv.shape, bv.shape,
    )
    h, c = hcv[..., :H], hcv[..., H:]
    z = xv @ Wxv + h @ Whv + bv
    i, f, g, o = _gates(z, H)
    c2 = f * c + i * g
    tc = np.tanh(c2)
    h2 = o * tc
    out = np.concatenate([h2, c2], axis=-1)
    tape = _tape_of(x, hc, Wx, Wh, b)
    if tape is None:
        return out
    _check(xv.ndim == 1, "lstm_step (recorded)", xv.shape)

    def back(gout):
        gh, gc = gout[:H], gout[H:]
        dc2 = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc2 * g * i * (1.0 - i),
            dc2 * c * f * (1.0 - f),
            dc2 * i * (1.0 - g * g),
            gh * tc * o * (1.0 - o),
        ])
        if isinstance(x, Tensor):
            _acc(x, Wxv @ dz)
        if isinstance(hc, Tensor):
            _acc(hc, np.concatenate([Whv @ dz, dc2 * f]))
        if isinstance(Wx, Tensor):
            _acc(Wx, np.outer(xv, dz))
        if isinstance(Wh, Tensor):
            _acc(Wh, np.outer(h, dz))
        if isinstance(b, Tensor):
            _acc(b, dz)

    return tape.record(out, (x, hc, Wx, Wh, b), back)


def lstm_sequence(X, Wx, Wh, b, reverse: bool = False):
    """Run a gated cell over the rows of X from a zero state.

    Returns the (T, H) matrix of hidden states, row t being the state after
    reading row t (for ``reverse``, after reading rows T-1 .. t).
    """
    Xv, Wxv, Whv, bv = (value(t) for t in (X, Wx, Wh, b))
    H = Whv.shape[0]
    _check(Xv.ndim == 2 and Wxv.shape == (Xv.shape[1], 4 * H) and Whv.shape == (H, 4 * H)
           and bv.shape == (4 * H,), "lstm_sequence", Xv.shape, Wxv.shape, Whv.shape, bv.shape)
    T = Xv.shape[0]
    order = range(T - 1, -1, -1) if reverse else range(T)
    Z = Xv @ Wxv + bv
    hs = np.zeros((T, H))
    record = _tape_of(X, Wx, Wh, b) is not None
    cache = []
    h = np.zeros(H)
    c = np.zeros(H)
    for t in order:
        z = Z[t] + h @ Whv
        i, f, g, o = _gates(z, H)
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        if record:
            cache.append((t, h, c, i, f, g, o, tc))
        h, c = h_new, c_new
        hs[t] = h
    if not record:
        return hs
    tape = _tape_of(X, Wx, Wh, b)

    def back(G):
        dZ = np.zeros((T, 4 * H))
        dh_next = np.zeros(H)
        dc_next = np.zeros(H)
        for t, h_prev, c_prev, i, f, g, o, tc in reversed(cache):
            dh = G[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ])
            dZ[t] = dz
            dh_next = Whv @ dz
            dc_next = dc * f
        if isinstance(X, Tensor):
            _acc(X, dZ @ Wxv.T)
        if isinstance(Wx, Tensor):
            _acc(Wx, Xv.T @ dZ)
        if isinstance(b, Tensor):
            _acc(b, dZ.sum(axis=0))
        if isinstance(Wh, Tensor):
            Hprev = np.stack([entry[1] for entry in cache]) if cache else np.zeros((0, H))
            dZ_ordered = np.stack([dZ[entry[0]] for entry in cache]) if cache else np.zeros((0, 4 * H))
            _acc(Wh, Hprev.T @ dZ_ordered)

    return tape.record(hs, (X, Wx, Wh, b), back)


def as_float(x) -> float:
    return float(np.asarray(value(x)).reshape(()))
