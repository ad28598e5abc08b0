"""A small reverse-mode autodiff engine for batches of 1-D multichannel signals.

Each op computes its forward value eagerly with numpy and records a closure
that pushes the output gradient back to its inputs.  ``Tensor.backward``
walks the recorded graph in reverse topological order.

Layer ops store signals channels-last, ``(batch, length, channels)``: the
convolution then lowers to one tall GEMM per call with contiguous copies.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import OddChannels, ShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward: Optional[Callable[[np.ndarray], None]] = None,
        name: str = "",
    ):
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological(self)
        self.accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # interior gradients are not needed once propagated
                node.grad = None

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


def _topological(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and _tracks(p):
                stack.append((p, False))
    return order


def _tracks(t: Tensor) -> bool:
    return t.requires_grad or bool(t._parents)


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate ops without recording a graph (inference)."""
    global _GRAD_ENABLED
    previous, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def _result(data, parents, backward) -> Tensor:
    live = [p for p in parents if _tracks(p)] if _GRAD_ENABLED else ()
    if not live:
        return Tensor(data)
    return Tensor(data, parents=live, backward=backward)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str = "") -> Tensor:
    return Tensor(np.array(data, copy=True), requires_grad=True, name=name)


# -- elementwise ------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")

    def backward(g):
        if _tracks(a):
            a.accumulate(g)
        if _tracks(b):
            b.accumulate(g)

    return _result(a.data + b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shaped tensors, or tensor times scalar tensor."""
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if _tracks(a):
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if _tracks(b):
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def scale(a: Tensor, k: float) -> Tensor:
    def backward(g):
        a.accumulate(g * k)

    return _result(a.data * k, (a,), backward)


def weighted_sum(terms: Iterable[tuple]) -> Tensor:
    """``sum(w * t)`` over ``(weight, scalar tensor)`` pairs."""
    terms = [(float(w), as_tensor(t)) for w, t in terms]
    value = sum(w * t.data for w, t in terms)

    def backward(g):
        for w, t in terms:
            if _tracks(t):
                t.accumulate(g * w)

    return _result(np.asarray(value, dtype=terms[0][1].dtype), [t for _, t in terms], backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        a.accumulate(g.reshape(a.shape))

    return _result(a.data.reshape(shape), (a,), backward)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- layers -----------------------------------------------------------------

def _im2col(xp: np.ndarray, kernel: int, stride: int, out_len: int) -> np.ndarray:
    """(B, Lp, C) padded input -> (B*out_len, kernel*C) column matrix."""
    B, _, C = xp.shape
    view = sliding_window_view(xp, kernel, axis=1)[:, ::stride][:, :out_len]
    return np.ascontiguousarray(view.transpose(0, 1, 3, 2)).reshape(B * out_len, kernel * C)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """Same-padded 1-D convolution (cross-correlation) on (B, L, C) input.

    ``weight`` is (out_ch, in_ch, kernel) with odd kernel; stride 2 yields
    ``ceil(L / 2)`` outputs.  The whole batch goes through one GEMM.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.data.ndim != 3:
        raise ShapeMismatch(f"conv1d expects (B, L, C), got {x.shape}")
    B, L, C = x.shape
    O, Cw, K = weight.shape
    if Cw != C:
        raise ShapeMismatch(f"conv1d: input has {C} channels, weight expects {Cw}")
    if L < 1:
        raise ShapeMismatch("conv1d: empty input")
    pad = K // 2
    out_len = (L - 1) // stride + 1
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0))) if pad else x.data
    cols = _im2col(xp, K, stride, out_len)
    # (O, C, K) -> (K*C, O) to match the column order
    wmat = weight.data.transpose(2, 1, 0).reshape(K * C, O)
    out = (cols @ wmat).reshape(B, out_len, O) + bias.data

    def backward(g):
        g2 = g.reshape(B * out_len, O)
        if _tracks(weight):
            gw = (cols.T @ g2).reshape(K, C, O).transpose(2, 1, 0)
            weight.accumulate(gw)
        if _tracks(bias):
            bias.accumulate(g2.sum(axis=0))
        if _tracks(x):
            # input gradient = full correlation of the zero-stuffed output
            # gradient with the flipped kernel
            span = stride * (out_len - 1) + 1
            gup = np.zeros((B, span + 2 * (K - 1), O), dtype=g.dtype)
            gup[:, K - 1:K - 1 + span:stride] = g
            full = span + K - 1
            gcols = _im2col(gup, K, 1, full)
            wflip = weight.data[:, :, ::-1].transpose(2, 0, 1).reshape(K * O, C)
            gxp = (gcols @ wflip).reshape(B, full, C)
            gx = gxp[:, pad:pad + L]
            if gx.shape[1] < L:
                gx = np.pad(gx, ((0, 0), (0, L - gx.shape[1]), (0, 0)))
            x.accumulate(gx)

    return _result(out, (x, weight, bias), backward)


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """``v`` where positive, ``a * v`` otherwise; one slope per channel (last axis)."""
    x, slope = as_tensor(x), as_tensor(slope)
    C = x.shape[-1]
    neg = x.data <= 0
    factor = np.where(neg, slope.data, np.ones_like(slope.data))
    out = x.data * factor

    def backward(g):
        if _tracks(x):
            x.accumulate(g * factor)
        if _tracks(slope):
            slope.accumulate((g * np.where(neg, x.data, 0)).reshape(-1, C).sum(axis=0))

    return _result(out, (x, slope), backward)


def subpixel(x: Tensor) -> Tensor:
    """(B, L, 2C) -> (B, 2L, C): channels 2c and 2c+1 interleave into output channel c."""
    x = as_tensor(x)
    B, L, C2 = x.shape
    if C2 % 2:
        raise OddChannels(f"subpixel needs an even channel count, got {C2}")
    C = C2 // 2
    out = x.data.reshape(B, L, C, 2).transpose(0, 1, 3, 2).reshape(B, 2 * L, C)

    def backward(g):
        x.accumulate(g.reshape(B, L, 2, C).transpose(0, 1, 3, 2).reshape(B, L, C2))

    return _result(out, (x,), backward)
