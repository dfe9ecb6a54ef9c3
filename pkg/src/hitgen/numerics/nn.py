"""Layer-level building blocks: affine maps, the two-layer MLP, BN/LN."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .contract import matmul
from .tensor import ShapeError, Tensor

BN_EPS = 1e-5
LN_EPS = 1e-5
BN_MOMENTUM = 0.99


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input dim {x.shape[-1]} != weight rows {w.shape[0]}")
    y = matmul(x, w)
    return y if b is None else y + b


def mlp_forward(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """max(0, x W1 + b1) W2 + b2 applied at every position."""
    if w1.shape[1] != w2.shape[0]:
        raise ShapeError(f"mlp: hidden dims {w1.shape[1]} and {w2.shape[0]} do not chain")
    return linear(ops.relu(linear(x, w1, b1)), w2, b2)


@dataclass
class NormState:
    """Running statistics for batch normalization.

    ``mean``/``var`` stay ``None`` until populated; eval mode refuses to run
    on an unpopulated state.
    """

    channels: int
    momentum: float = BN_MOMENTUM
    mean: np.ndarray | None = None
    var: np.ndarray | None = None
    updates: int = field(default=0)

    def populate(self, dtype=np.float64) -> "NormState":
        self.mean = np.zeros(self.channels, dtype=dtype)
        self.var = np.ones(self.channels, dtype=dtype)
        return self


def normalize(x: Tensor, kind: str, scale: Tensor, shift: Tensor, state: NormState | None = None,
              mode: str = "train", eps: float | None = None) -> Tensor:
    """Batch or layer normalization over the last (channel) axis, then scale/shift.

    ``kind="batch"`` pools statistics over every axis but the channel axis;
    in train mode it also folds the batch statistics into ``state``.
    ``kind="layer"`` normalizes each position over its channels.
    ``mode="batch"`` uses batch statistics without touching ``state``.
    """
    if kind == "layer":
        eps = LN_EPS if eps is None else eps
        mu = ops.mean(x, axis=-1, keepdims=True)
        xc = x - mu
        var = ops.mean(ops.square(xc), axis=-1, keepdims=True)
        xhat = xc * ops.power(var + eps, -0.5)
        return xhat * scale + shift
    if kind != "batch":
        raise ValueError(f"unknown normalization kind {kind!r}")
    if x.ndim < 2:
        raise ShapeError("batch normalization needs a batch axis")
    eps = BN_EPS if eps is None else eps
    axes = tuple(range(x.ndim - 1))
    if mode == "eval":
        if state is None or state.mean is None or state.var is None:
            raise ValueError("eval-mode batch normalization needs populated running statistics")
        inv = 1.0 / np.sqrt(state.var + eps)
        xhat = (x - Tensor(state.mean.astype(x.dtype))) * Tensor(inv.astype(x.dtype))
        return xhat * scale + shift
    if mode not in ("train", "batch"):
        raise ValueError(f"unknown mode {mode!r}")
    mu = ops.mean(x, axis=axes, keepdims=True)
    xc = x - mu
    var = ops.mean(ops.square(xc), axis=axes, keepdims=True)
    xhat = xc * ops.power(var + eps, -0.5)
    if state is not None and mode == "train":
        m = state.momentum
        bm = mu.data.reshape(-1)
        bv = var.data.reshape(-1)
        if state.mean is None:
            state.mean, state.var = bm.copy(), bv.copy()
        else:
            state.mean = m * state.mean + (1 - m) * bm
            state.var = m * state.var + (1 - m) * bv
        state.updates += 1
    return xhat * scale + shift


@dataclass
class Linear:
    w: Tensor
    b: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.w, self.b)


@dataclass
class MlpWeights:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        return mlp_forward(x, self.w1, self.b1, self.w2, self.b2)


@dataclass
class NormParams:
    """Learned scale/shift plus running statistics for one normalization layer."""

    scale: Tensor
    shift: Tensor
    state: NormState

    def __call__(self, x: Tensor, kind: str = "batch", mode: str = "train") -> Tensor:
        state = self.state if kind == "batch" else None
        return normalize(x, kind, self.scale, self.shift, state=state, mode=mode)
