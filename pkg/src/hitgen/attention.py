"""Multi-axis blocked self-attention, its ablation variants, and MQA cross-attention.

Attention kernels are position-free: positional encodings are added by the
caller. Keys and values use a single projection shared by every head
(multi-query form). Logits are scaled by ``1/sqrt(k)``.
"""

from __future__ import annotations

import math
from fractions import Fraction
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .blocking import BlockedTensor
from .numerics import ops
from .numerics.contract import contract
from .numerics.nn import MlpWeights, NormParams
from .numerics.tensor import ShapeError, Tensor

MODES = ("multi_axis", "regional_only", "dilated_only", "interleaved", "axial", "full")


class AttentionError(ShapeError):
    pass


@dataclass
class AttentionWeights:
    w_q: Tensor  # [h, d, k]
    w_k: Tensor  # [d_kv, k]
    w_v: Tensor  # [d_kv, v]
    w_o: Tensor  # [h, d, v]

    @property
    def heads(self) -> int:
        return self.w_q.shape[0]

    @property
    def model_dim(self) -> int:
        return self.w_q.shape[1]

    @property
    def key_dim(self) -> int:
        return self.w_q.shape[2]

    @property
    def value_dim(self) -> int:
        return self.w_v.shape[1]

    def validate(self, kv_dim: int | None = None) -> None:
        h, d, k = self.w_q.shape
        if self.w_k.shape[1] != k:
            raise AttentionError(f"key projection {self.w_k.shape} does not match key dim {k}")
        if self.w_o.shape != (h, d, self.w_v.shape[1]):
            raise AttentionError(f"output projection {self.w_o.shape} != {(h, d, self.w_v.shape[1])}")
        if self.w_k.shape[0] != self.w_v.shape[0]:
            raise AttentionError("key and value projections read different input dims")
        if kv_dim is not None and self.w_k.shape[0] != kv_dim:
            raise AttentionError(f"key/value source has dim {kv_dim}, projection expects {self.w_k.shape[0]}")


def random_weights(rng: np.random.Generator, d: int, heads: int, k: int | None = None,
                   v: int | None = None, kv_dim: int | None = None, dtype=np.float64) -> AttentionWeights:
    k = k or max(d // heads, 1)
    v = v or k
    kv_dim = kv_dim or d

    def w(shape, fan_in):
        return Tensor((rng.standard_normal(shape) / math.sqrt(fan_in)).astype(dtype))

    return AttentionWeights(w((heads, d, k), d), w((kv_dim, k), kv_dim), w((kv_dim, v), kv_dim),
                            w((heads, d, v), heads * v))


# -- logit accounting ----------------------------------------------------------

_counter = threading.local()


@contextmanager
def count_logits():
    """Tally the number of attention logit entries computed inside the block."""
    box = [0]
    prev = getattr(_counter, "box", None)
    _counter.box = box
    try:
        yield box
    finally:
        _counter.box = prev


def _tally(logits: Tensor) -> None:
    box = getattr(_counter, "box", None)
    if box is not None:
        box[0] += logits.size


# -- blocked kernels -----------------------------------------------------------

def _dilated(q: Tensor, key: Tensor, val: Tensor) -> Tensor:
    # attend across patches at a fixed within-patch index
    logits = contract("bhxyk,bzyk->bhyxz", q, key)
    _tally(logits)
    scores = ops.softmax(logits, axis=-1)
    return contract("bhyxz,bzyv->bhxyv", scores, val)


def _regional(q: Tensor, key: Tensor, val: Tensor) -> Tensor:
    # attend within a patch
    logits = contract("bhxyk,bxzk->bhxyz", q, key)
    _tally(logits)
    scores = ops.softmax(logits, axis=-1)
    return contract("bhxyz,bxzv->bhxyv", scores, val)


def blocked_attention(x: Tensor, y: Tensor, w: AttentionWeights, mode: str = "multi_axis") -> Tensor:
    """Attention on raw blocked tensors ``[b, m, n, d]``; ``x`` queries, ``y`` keys/values.

    ``multi_axis`` gives the first half of the heads dilated attention (over
    the patch axis) and the second half regional attention (over the
    within-patch axis). ``regional_only``/``dilated_only`` use one axis for
    every head; ``full`` attends over all ``m*n`` positions.
    """
    if x.ndim != 4 or x.shape != y.shape:
        raise AttentionError(f"query {x.shape} and key/value {y.shape} must share a [b, m, n, d] shape")
    w.validate(kv_dim=y.shape[-1])
    h = w.heads
    if mode == "full":
        b, m, n, d = x.shape
        out = blocked_attention(ops.reshape(x, (b, 1, m * n, d)), ops.reshape(y, (b, 1, m * n, d)), w,
                                "regional_only")
        return ops.reshape(out, x.shape)
    if mode in ("multi_axis", "axial") and h % 2:
        raise AttentionError(f"multi-axis attention splits heads in halves; got {h} heads")

    q = contract("bmnd,hdk->bhmnk", x, w.w_q) * (1.0 / math.sqrt(w.key_dim))
    key = contract("bmnd,dk->bmnk", y, w.w_k)
    val = contract("bmnd,dv->bmnv", y, w.w_v)
    if mode in ("multi_axis", "axial"):
        q1, q2 = ops.split(q, 2, axis=1)
        o = ops.concat([_dilated(q1, key, val), _regional(q2, key, val)], axis=1)
    elif mode == "regional_only":
        o = _regional(q, key, val)
    elif mode == "dilated_only":
        o = _dilated(q, key, val)
    else:
        raise AttentionError(f"mode {mode!r} is not a single-layer blocked mode")
    return contract("bhmnv,hdv->bmnd", o, w.w_o)


def multi_axis_attention(x: BlockedTensor, y: BlockedTensor, w: AttentionWeights,
                         mode: str = "multi_axis") -> BlockedTensor:
    """Blocked self-attention returning a tensor with the query's geometry."""
    if (x.patch_size, x.height, x.width) != (y.patch_size, y.height, y.width):
        raise AttentionError("query and key/value blocked with different geometry")
    return x.with_data(blocked_attention(x.data, y.data, w, mode))


def axial_attention(x: Tensor, w: AttentionWeights) -> Tensor:
    """Half the heads attend along columns, half along rows, with no blocking.

    This is the multi-axis kernel on ``[b, rows, cols, d]`` read directly as
    ``[b, m, n, d]``.
    """
    if x.ndim != 4:
        raise AttentionError(f"axial attention expects [b, h, w, d], got {x.shape}")
    return blocked_attention(x, x, w, "axial")


# -- all-pairs and cross attention --------------------------------------------

def _mqa(xq: Tensor, kv: Tensor, w: AttentionWeights) -> Tensor:
    q = contract("bnd,hdk->bhnk", xq, w.w_q) * (1.0 / math.sqrt(w.key_dim))
    key = contract("bld,dk->blk", kv, w.w_k)
    val = contract("bld,dv->blv", kv, w.w_v)
    logits = contract("bhnk,blk->bhnl", q, key)
    _tally(logits)
    scores = ops.softmax(logits, axis=-1)
    o = contract("bhnl,blv->bhnv", scores, val)
    return contract("bhnv,hdv->bnd", o, w.w_o)


def full_attention_oracle(x: Tensor, w: AttentionWeights, y: Tensor | None = None) -> Tensor:
    """All-pairs multi-query attention over ``[b, N, d]``; the O(N^2) baseline."""
    y = x if y is None else y
    if x.ndim != 3 or y.shape[:2] != x.shape[:2]:
        raise AttentionError(f"expected [b, N, d] inputs, got {x.shape} and {y.shape}")
    w.validate(kv_dim=y.shape[-1])
    return _mqa(x, y, w)


def cross_attention_mqa(x: Tensor, z: Tensor, pos_z: Tensor, w: AttentionWeights) -> Tensor:
    """Queries from ``x [b, N, d]``; keys and values from ``z + pos_z`` (``[b, L, C_Z]``)."""
    if x.ndim != 3 or z.ndim != 3 or z.shape[0] != x.shape[0]:
        raise AttentionError(f"expected x [b, N, d] and z [b, L, C], got {x.shape} and {z.shape}")
    if pos_z.shape != z.shape[1:]:
        raise AttentionError(f"latent positional encoding {pos_z.shape} != latent grid {z.shape[1:]}")
    if x.shape[-1] != w.model_dim:
        raise AttentionError(f"query dim {x.shape[-1]} != projection dim {w.model_dim}")
    w.validate(kv_dim=z.shape[-1])
    return _mqa(x, z + pos_z, w)


def multi_head_attention(x: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor, w_o: Tensor) -> Tensor:
    """Standard multi-head attention with per-head K/V projections ``[h, d, k]``."""
    q = contract("bnd,hdk->bhnk", x, w_q) * (1.0 / math.sqrt(w_q.shape[-1]))
    key = contract("bld,hdk->bhlk", x, w_k)
    val = contract("bld,hdv->bhlv", x, w_v)
    logits = contract("bhnk,bhlk->bhnl", q, key)
    scores = ops.softmax(logits, axis=-1)
    o = contract("bhnl,bhlv->bhnv", scores, val)
    return contract("bhnv,hdv->bnd", o, w_o)


# -- residual block -----------------------------------------------------------

def attention_block(x: Tensor, inner: Callable[[Tensor], Tensor], norm_kind: str, norm1: NormParams,
                    norm2: NormParams | None = None, mlp: MlpWeights | None = None,
                    mode: str = "train") -> Tensor:
    """Pre-norm residual block: ``y = x + inner(N(x))``, then ``y + MLP(N(y))``.

    With ``mlp=None`` only the attention half runs.
    """
    y = inner(norm1(x, norm_kind, mode))
    if y.shape != x.shape:
        raise AttentionError(f"inner op changed shape {x.shape} -> {y.shape}")
    y = x + y
    if mlp is None:
        return y
    return y + mlp(norm2(y, norm_kind, mode))


# -- sizing ----------------------------------------------------------------------

def balance_patch_size(h: int, w: int) -> int:
    """Common divisor ``p`` of ``h`` and ``w`` minimizing ``|p^2 - h*w/p^2|`` (ties to smaller p)."""
    g = math.gcd(h, w)
    if g < 1:
        raise ValueError(f"no common divisor for {h}x{w}")
    best, best_gap = 1, None
    for p in range(1, g + 1):
        if g % p:
            continue
        gap = abs(p * p - Fraction(h * w, p * p))
        if best_gap is None or gap < best_gap:
            best, best_gap = p, gap
    return best


def flop_count(mode: str, b: int, m: int, n: int, d: int = 0, h: int = 2, k: int = 0, v: int = 0) -> int:
    """Number of attention logit entries one layer computes.

    ``d``, ``k`` and ``v`` do not change the logit count; they are accepted so
    the signature mirrors a full layer description.
    """
    if mode == "full":
        N = m * n
        return b * h * N * N
    if mode in ("multi_axis", "axial", "interleaved"):
        # interleaved: one layer of each axis costs the same as two multi-axis layers
        if h % 2:
            raise AttentionError("multi-axis attention needs an even head count")
        return b * (h // 2) * (n * m * m + m * n * n)
    if mode == "regional_only":
        return b * h * m * n * n
    if mode == "dilated_only":
        return b * h * n * m * m
    raise AttentionError(f"unknown attention mode {mode!r}")
