"""Brute-force reference implementations.

These share no code path with the kernels they check: plain numpy loops,
explicit index maps and dense masked attention.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def loop_contract(spec: str, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Evaluate a two-operand einsum by iterating over every label assignment."""
    lhs, out = spec.replace(" ", "").split("->")
    la, lb = lhs.split(",")
    ext = dict(zip(la, A.shape))
    ext.update(zip(lb, B.shape))
    labels = sorted(set(la + lb))
    res = np.zeros([ext[c] for c in out], dtype=np.result_type(A, B))
    for vals in itertools.product(*(range(ext[c]) for c in labels)):
        env = dict(zip(labels, vals))
        ia = tuple(env[c] for c in la)
        ib = tuple(env[c] for c in lb)
        io = tuple(env[c] for c in out)
        res[io] += A[ia] * B[ib]
    return res


def space_to_depth_map(x: np.ndarray, p: int) -> np.ndarray:
    b, h, w, d = x.shape
    out = np.empty((b, h // p, w // p, p * p * d), dtype=x.dtype)
    for bi, i, j, di, dj, c in itertools.product(range(b), range(h // p), range(w // p), range(p),
                                                 range(p), range(d)):
        out[bi, i, j, (di * p + dj) * d + c] = x[bi, i * p + di, j * p + dj, c]
    return out


def block_map(x: np.ndarray, p: int) -> np.ndarray:
    b, h, w, d = x.shape
    gw = w // p
    out = np.empty((b, (h // p) * gw, p * p, d), dtype=x.dtype)
    for bi, i, j, c in itertools.product(range(b), range(h), range(w), range(d)):
        patch = (i // p) * gw + (j // p)
        pos = (i % p) * p + (j % p)
        out[bi, patch, pos, c] = x[bi, i, j, c]
    return out


def nearest_upsample_map(x: np.ndarray) -> np.ndarray:
    b, h, w, d = x.shape
    out = np.empty((b, 2 * h, 2 * w, d), dtype=x.dtype)
    for bi, i, j, c in itertools.product(range(b), range(2 * h), range(2 * w), range(d)):
        out[bi, i, j, c] = x[bi, i // 2, j // 2, c]
    return out


def masked_attention(x: np.ndarray, y: np.ndarray, w_q, w_k, w_v, w_o, masks) -> np.ndarray:
    """Dense multi-query attention over flattened positions with a per-head mask.

    ``x``/``y`` are ``[b, N, d]``; ``masks[h]`` is a boolean ``[N, N]`` matrix
    (query, key) of allowed pairs.
    """
    b, N, _ = x.shape
    h, d, k = w_q.shape
    out = np.zeros((b, N, d))
    for bi in range(b):
        key = y[bi] @ w_k
        val = y[bi] @ w_v
        for hi in range(h):
            q = x[bi] @ w_q[hi] / math.sqrt(k)
            logits = q @ key.T
            logits = np.where(masks[hi], logits, -np.inf)
            logits -= logits.max(axis=1, keepdims=True)
            e = np.exp(logits)
            s = e / e.sum(axis=1, keepdims=True)
            out[bi] += (s @ val) @ w_o[hi].T
    return out


def blocked_masks(m: int, n: int, heads: int, mode: str) -> list[np.ndarray]:
    """Per-head masks over positions ``pos = patch * n + within`` for blocked attention."""
    idx = np.arange(m * n)
    patch, within = idx // n, idx % n
    dilated = within[:, None] == within[None, :]
    regional = patch[:, None] == patch[None, :]
    full = np.ones((m * n, m * n), dtype=bool)
    if mode in ("multi_axis", "axial"):
        return [dilated] * (heads // 2) + [regional] * (heads // 2)
    return [{"regional_only": regional, "dilated_only": dilated, "full": full}[mode]] * heads

