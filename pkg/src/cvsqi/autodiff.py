"""Minimal reverse-mode automatic differentiation over numpy arrays.

Each operation returns a Var recording its parents and a closure that maps the
output gradient to parent gradients.  backward() runs a topological sweep from
a scalar loss.  The op set is exactly what the models here need: dense layers,
1D (transposed) convolution with width-1/3 kernels, 2-to-1 max pooling, the
elementwise activations, and the reductions used by the losses.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import GraphNotRecorded, ShapeMismatch


class Var:
    __slots__ = ("value", "grad", "_parents", "_bwd")

    def __init__(self, value, parents=(), bwd=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._bwd = bwd

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


def _as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def backward(root: Var) -> None:
    """Accumulate gradients of a scalar root into every reachable Var."""
    if root.value.size != 1:
        raise ShapeMismatch("backward requires a scalar root")
    if root._bwd is None and not root._parents:
        raise GraphNotRecorded("root has no recorded forward graph")

    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._bwd is None or node.grad is None:
            continue
        grads = node._bwd(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None:
                continue
            # accumulation always allocates, so shared gradient arrays stay intact
            parent.grad = g if parent.grad is None else parent.grad + g


# --- elementwise ---

def add(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    out = a.value + b.value

    def bwd(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)
    return Var(out, (a, b), bwd)


def sub(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    out = a.value - b.value

    def bwd(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)
    return Var(out, (a, b), bwd)


def mul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    out = a.value * b.value

    def bwd(g):
        return (_unbroadcast(g * b.value, a.value.shape),
                _unbroadcast(g * a.value, b.value.shape))
    return Var(out, (a, b), bwd)


def scale(a, k: float) -> Var:
    a = _as_var(a)
    return Var(a.value * k, (a,), lambda g: (g * k,))


def square(a) -> Var:
    a = _as_var(a)
    return Var(a.value ** 2, (a,), lambda g: (2.0 * a.value * g,))


def exp(a) -> Var:
    a = _as_var(a)
    out = np.exp(a.value)
    return Var(out, (a,), lambda g: (g * out,))


def log(a) -> Var:
    a = _as_var(a)
    return Var(np.log(a.value), (a,), lambda g: (g / a.value,))


def relu(a) -> Var:
    a = _as_var(a)
    mask = a.value > 0
    return Var(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Var:
    a = _as_var(a)
    out = np.empty_like(a.value)
    pos = a.value >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.value[pos]))
    ez = np.exp(a.value[~pos])
    out[~pos] = ez / (1.0 + ez)
    return Var(out, (a,), lambda g: (g * out * (1.0 - out),))


def clip(a, lo: float, hi: float) -> Var:
    """Clamp with pass-through gradient inside the range, zero outside."""
    a = _as_var(a)
    mask = (a.value > lo) & (a.value < hi)
    return Var(np.clip(a.value, lo, hi), (a,), lambda g: (g * mask,))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --- reductions / reshaping ---

def sum_(a) -> Var:
    a = _as_var(a)
    return Var(a.value.sum(), (a,), lambda g: (np.broadcast_to(g, a.value.shape).copy(),))


def mean(a) -> Var:
    a = _as_var(a)
    n = a.value.size
    return Var(a.value.mean(), (a,),
               lambda g: (np.broadcast_to(g / n, a.value.shape).copy(),))


def reshape(a, shape) -> Var:
    a = _as_var(a)
    old = a.value.shape
    return Var(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def slice_cols(a, start: int, stop: int) -> Var:
    """Columns [start, stop) of a 2-D array."""
    a = _as_var(a)
    if a.value.ndim != 2:
        raise ShapeMismatch("slice_cols expects a 2-D array")

    def bwd(g):
        da = np.zeros_like(a.value)
        da[:, start:stop] = g
        return (da,)
    return Var(a.value[:, start:stop], (a,), bwd)


# --- linear layers ---

def dense(x, w, b) -> Var:
    """Affine map: (N, in) @ (out, in)^T + (out,)."""
    x, w, b = _as_var(x), _as_var(w), _as_var(b)
    if x.value.ndim != 2 or w.value.ndim != 2 or x.value.shape[1] != w.value.shape[1]:
        raise ShapeMismatch(
            f"dense: x {x.value.shape} incompatible with W {w.value.shape}")
    if b.value.shape != (w.value.shape[0],):
        raise ShapeMismatch(f"dense: bias {b.value.shape} vs W {w.value.shape}")
    out = x.value @ w.value.T + b.value

    def bwd(g):
        return g @ w.value, g.T @ x.value, g.sum(axis=0)
    return Var(out, (x, w, b), bwd)


def _conv_geometry(length: int, k: int, stride: int):
    out_len = -(-length // stride)
    pad = max((out_len - 1) * stride + k - length, 0)
    return out_len, pad // 2, pad


def conv1d(x, kern, b, stride: int = 1) -> Var:
    """Cross-correlation with same-style zero padding.

    x: (N, L, C_in); kern: (k, C_in, C_out); output length ceil(L / stride).
    """
    x, kern, b = _as_var(x), _as_var(kern), _as_var(b)
    if x.value.ndim != 3 or kern.value.ndim != 3:
        raise ShapeMismatch("conv1d expects x (N, L, Cin) and kernel (k, Cin, Cout)")
    n, length, cin = x.value.shape
    k, kcin, cout = kern.value.shape
    if kcin != cin:
        raise ShapeMismatch(f"conv1d: input channels {cin} vs kernel {kcin}")
    if b.value.shape != (cout,):
        raise ShapeMismatch("conv1d: bias shape mismatch")
    out_len, pl, pad = _conv_geometry(length, k, stride)
    xp = np.pad(x.value, ((0, 0), (pl, pad - pl), (0, 0)))
    idx = np.arange(out_len)[:, None] * stride + np.arange(k)[None, :]
    cols = xp[:, idx, :].reshape(n, out_len, k * cin)
    kmat = kern.value.reshape(k * cin, cout)
    out = cols @ kmat + b.value

    def bwd(g):
        dcols = (g @ kmat.T).reshape(n, out_len, k, cin)
        dxp = np.zeros_like(xp)
        np.add.at(dxp, (slice(None), idx, slice(None)), dcols)
        dx = dxp[:, pl:pl + length, :]
        dk = (cols.reshape(-1, k * cin).T @ g.reshape(-1, cout)).reshape(k, cin, cout)
        return dx, dk, g.sum(axis=(0, 1))
    return Var(out, (x, kern, b), bwd)


def conv_transpose1d(x, kern, b, stride: int, out_len: int) -> Var:
    """Adjoint of conv1d: maps length ceil(out_len / stride) back to out_len.

    x: (N, L_small, C_in); kern: (k, C_in, C_out).
    """
    x, kern, b = _as_var(x), _as_var(kern), _as_var(b)
    n, l_small, cin = x.value.shape
    k, kcin, cout = kern.value.shape
    if kcin != cin:
        raise ShapeMismatch(f"conv_transpose1d: input channels {cin} vs kernel {kcin}")
    if b.value.shape != (cout,):
        raise ShapeMismatch("conv_transpose1d: bias shape mismatch")
    l_chk, pl, pad = _conv_geometry(out_len, k, stride)
    if l_chk != l_small:
        raise ShapeMismatch(
            f"conv_transpose1d: input length {l_small} inconsistent with "
            f"out_len {out_len} at stride {stride}")
    idx = np.arange(l_small)[:, None] * stride + np.arange(k)[None, :]
    # scatter x through the conv index map
    tmp = np.tensordot(x.value, kern.value, axes=([2], [1]))   # (N, Ls, k, Cout)
    outp = np.zeros((n, out_len + pad, cout))
    np.add.at(outp, (slice(None), idx, slice(None)), tmp)
    out = outp[:, pl:pl + out_len, :] + b.value

    def bwd(g):
        gp = np.pad(g, ((0, 0), (pl, pad - pl), (0, 0)))
        gcols = gp[:, idx, :]                                   # (N, Ls, k, Cout)
        dx = np.einsum("notc,tic->noi", gcols, kern.value)
        dk = np.einsum("noi,notc->tic", x.value, gcols)
        return dx, dk, g.sum(axis=(0, 1))
    return Var(out, (x, kern, b), bwd)


def maxpool1d(x) -> Var:
    """Per-channel max over non-overlapping pairs; odd trailing sample dropped."""
    x = _as_var(x)
    if x.value.ndim != 3:
        raise ShapeMismatch("maxpool1d expects (N, L, C)")
    n, length, c = x.value.shape
    half = length // 2
    win = x.value[:, :half * 2, :].reshape(n, half, 2, c)
    out = win.max(axis=2)
    arg = win.argmax(axis=2)

    def bwd(g):
        dwin = np.zeros_like(win)
        np.put_along_axis(dwin, arg[:, :, None, :], g[:, :, None, :], axis=2)
        dx = np.zeros_like(x.value)
        dx[:, :half * 2, :] = dwin.reshape(n, half * 2, c)
        return (dx,)
    return Var(out, (x,), bwd)


def maxpool_output_length(length: int) -> int:
    return length // 2
