"""Differentiable primitive operations.

Each primitive registers a numpy forward rule and a backward rule expressed
with these same primitives, which keeps higher-order gradients available.
"""

from __future__ import annotations

import builtins
from typing import Sequence

import numpy as np

from .tensor import BACKWARD_RULES, FORWARD_RULES, ShapeError, Tensor, apply, as_tensor


def primitive(name: str, forward, backward) -> None:
    FORWARD_RULES[name] = forward
    BACKWARD_RULES[name] = backward


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        b = as_tensor(b, like=a)
    elif isinstance(b, Tensor):
        a = as_tensor(a, like=b)
    else:
        a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}") from None
    return a, b


def sum_to(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reduce a broadcast gradient back to ``shape``."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and g.shape[i + lead] != 1)
    out = sum(g, axis=axes, keepdims=True) if axes else g
    return reshape(out, shape)


# -- elementwise binary ------------------------------------------------------

primitive("add", np.add, lambda g, ins, out: (sum_to(g, ins[0].shape), sum_to(g, ins[1].shape)))
primitive("sub", np.subtract, lambda g, ins, out: (sum_to(g, ins[0].shape), sum_to(neg(g), ins[1].shape)))
primitive("mul", np.multiply,
          lambda g, ins, out: (sum_to(mul(g, ins[1]), ins[0].shape), sum_to(mul(g, ins[0]), ins[1].shape)))


def _div_backward(g, ins, out):
    a, b = ins
    ga = div(g, b)
    gb = neg(mul(ga, out))
    return sum_to(ga, a.shape), sum_to(gb, b.shape)


primitive("div", np.divide, _div_backward)


def add(a, b) -> Tensor:
    return apply("add", _pair(a, b))


def sub(a, b) -> Tensor:
    return apply("sub", _pair(a, b))


def mul(a, b) -> Tensor:
    return apply("mul", _pair(a, b))


def div(a, b) -> Tensor:
    return apply("div", _pair(a, b))


# -- elementwise unary -------------------------------------------------------

primitive("neg", np.negative, lambda g, ins, out: (neg(g),))
primitive("exp", np.exp, lambda g, ins, out: (mul(g, out),))
primitive("log", np.log, lambda g, ins, out: (div(g, ins[0]),))
primitive("power", lambda x, p: np.power(x, p),
          lambda g, ins, out, p: (mul(g, mul(power(ins[0], p - 1), p)),))


def _relu_backward(g, ins, out):
    # subgradient at 0 is 0
    mask = Tensor((ins[0].data > 0).astype(ins[0].dtype))
    return (mul(g, mask),)


primitive("relu", lambda x: np.maximum(x, 0), _relu_backward)


def _sigmoid_np(x):
    # split by sign so neither branch overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)


def _softplus_np(x):
    return (np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))).astype(x.dtype)


primitive("sigmoid", _sigmoid_np, lambda g, ins, out: (mul(g, mul(out, sub(1.0, out))),))
primitive("softplus", _softplus_np, lambda g, ins, out: (mul(g, sigmoid(ins[0])),))


def neg(x) -> Tensor:
    return apply("neg", [as_tensor(x)])


def exp(x) -> Tensor:
    return apply("exp", [as_tensor(x)])


def log(x) -> Tensor:
    return apply("log", [as_tensor(x)])


def power(x, p: float) -> Tensor:
    return apply("power", [as_tensor(x)], p=p)


def square(x) -> Tensor:
    x = as_tensor(x)
    return mul(x, x)


def relu(x) -> Tensor:
    return apply("relu", [as_tensor(x)])


def sigmoid(x) -> Tensor:
    return apply("sigmoid", [as_tensor(x)])


def softplus(x) -> Tensor:
    """log(1 + exp(x)), computed without overflow."""
    return apply("softplus", [as_tensor(x)])


def log_sigmoid(x) -> Tensor:
    return neg(softplus(neg(x)))


# -- shape ops ---------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _sum_backward(g, ins, out, axis, keepdims):
    shape = ins[0].shape
    if not keepdims:
        kept = list(shape)
        for a in axis:
            kept[a] = 1
        g = reshape(g, tuple(kept))
    return (broadcast_to(g, shape),)


primitive("sum", lambda x, axis, keepdims: np.sum(x, axis=axis, keepdims=keepdims), _sum_backward)
primitive("reshape", lambda x, shape: np.reshape(x, shape), lambda g, ins, out, shape: (reshape(g, ins[0].shape),))
primitive("transpose", lambda x, perm: np.transpose(x, perm),
          lambda g, ins, out, perm: (transpose(g, tuple(np.argsort(perm))),))
primitive("broadcast_to", lambda x, shape: np.broadcast_to(x, shape).copy(),
          lambda g, ins, out, shape: (sum_to(g, ins[0].shape),))


def sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    return apply("sum", [x], axis=_norm_axes(axis, x.ndim), keepdims=keepdims)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / count)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if -1 in shape:
        known = int(np.prod([s for s in shape if s != -1]))
        shape = tuple(x.size // known if s == -1 else s for s in shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    return apply("reshape", [x], shape=shape)


def transpose(x, perm: Sequence[int] | None = None) -> Tensor:
    x = as_tensor(x)
    perm = tuple(reversed(range(x.ndim))) if perm is None else tuple(int(p) for p in perm)
    if sorted(perm) != list(range(x.ndim)):
        raise ShapeError(f"invalid permutation {perm} for rank {x.ndim}")
    return apply("transpose", [x], perm=perm)


def broadcast_to(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        np.broadcast_shapes(x.shape, shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {x.shape} to {shape}") from None
    return apply("broadcast_to", [x], shape=shape)


def _slice_fwd(x, axis, start, stop):
    idx = [builtins.slice(None)] * x.ndim
    idx[axis] = builtins.slice(start, stop)
    return x[tuple(idx)].copy()


def _pad_fwd(x, axis, before, after):
    widths = [(0, 0)] * x.ndim
    widths[axis] = (before, after)
    return np.pad(x, widths)


primitive("slice", _slice_fwd,
          lambda g, ins, out, axis, start, stop: (pad(g, axis, start, ins[0].shape[axis] - stop),))
primitive("pad", _pad_fwd,
          lambda g, ins, out, axis, before, after: (slice_axis(g, axis, before, g.shape[axis] - after),))


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis %= x.ndim
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(f"bad slice [{start}:{stop}] of axis with extent {x.shape[axis]}")
    return apply("slice", [x], axis=axis, start=start, stop=stop)


def pad(x: Tensor, axis: int, before: int, after: int) -> Tensor:
    """Zero-pad one axis."""
    return apply("pad", [x], axis=axis % x.ndim, before=before, after=after)


def split(x: Tensor, parts: int, axis: int) -> list[Tensor]:
    n = x.shape[axis]
    if n % parts:
        raise ShapeError(f"axis of extent {n} does not split into {parts} parts")
    step = n // parts
    return [slice_axis(x, axis, i * step, (i + 1) * step) for i in range(parts)]


def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    """Concatenate along ``axis``; built from pad + add so it stays differentiable."""
    axis %= xs[0].ndim
    total = builtins.sum(x.shape[axis] for x in xs)
    out = None
    offset = 0
    for x in xs:
        piece = pad(x, axis, offset, total - offset - x.shape[axis])
        out = piece if out is None else add(out, piece)
        offset += x.shape[axis]
    return out


# -- softmax -----------------------------------------------------------------

def _softmax_np(x, axis):
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _softmax_backward(g, ins, out, axis):
    inner = sum(mul(g, out), axis=axis, keepdims=True)
    return (mul(out, sub(g, inner)),)


primitive("softmax", _softmax_np, _softmax_backward)


def softmax(x, axis: int = -1) -> Tensor:
    """exp(x - max) / sum(exp(x - max)) along ``axis``."""
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of range for rank {x.ndim}")
    return apply("softmax", [x], axis=axis % x.ndim)
