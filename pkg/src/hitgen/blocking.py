"""Spatial layout transforms on channel-last feature maps ``[b, h, w, d]``.

All maps are built from reshape/transpose/broadcast, so they are exact
permutations (or replications) and differentiate like any other op.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .numerics import ops
from .numerics.tensor import ShapeError, Tensor


class BlockingError(ShapeError):
    pass


@dataclass(frozen=True)
class BlockedTensor:
    """A feature map reorganized as ``[batch, patches, positions, channels]``.

    Patches are enumerated row-major over the patch grid; positions are
    enumerated row-major within each ``patch_size x patch_size`` patch.
    """

    data: Tensor
    patch_size: int
    height: int
    width: int

    def __post_init__(self):
        p, h, w = self.patch_size, self.height, self.width
        if p < 1 or h % p or w % p:
            raise BlockingError(f"patch size {p} does not divide {h}x{w}")
        if self.data.ndim != 4 or self.data.shape[1:3] != ((h * w) // (p * p), p * p):
            raise BlockingError(f"blocked data {self.data.shape} does not match a {h}x{w} map with {p}x{p} patches")

    @property
    def aspect_ratio(self) -> float:
        return self.width / self.height

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data: Tensor) -> "BlockedTensor":
        if data.shape != self.data.shape:
            raise BlockingError(f"blocked shape changed from {self.data.shape} to {data.shape}")
        return BlockedTensor(data, self.patch_size, self.height, self.width)


def _check_rank4(x: Tensor, what: str) -> None:
    if x.ndim != 4:
        raise BlockingError(f"{what} expects [b, h, w, d], got shape {x.shape}")


def space_to_depth(x: Tensor, p: int) -> Tensor:
    """``[b, h, w, d] -> [b, h/p, w/p, p*p*d]``.

    Output channel ``(di*p + dj)*d + c`` holds input pixel ``(i*p+di, j*p+dj)``,
    channel ``c``.
    """
    _check_rank4(x, "space_to_depth")
    b, h, w, d = x.shape
    if p < 1 or h % p or w % p:
        raise BlockingError(f"patch size {p} does not divide {h}x{w}")
    y = ops.reshape(x, (b, h // p, p, w // p, p, d))
    y = ops.transpose(y, (0, 1, 3, 2, 4, 5))
    return ops.reshape(y, (b, h // p, w // p, p * p * d))


def depth_to_space(x: Tensor, p: int) -> Tensor:
    """Inverse of :func:`space_to_depth` with the same channel ordering."""
    _check_rank4(x, "depth_to_space")
    b, h, w, c = x.shape
    if p < 1 or c % (p * p):
        raise BlockingError(f"channel extent {c} not divisible by {p * p}")
    d = c // (p * p)
    y = ops.reshape(x, (b, h, w, p, p, d))
    y = ops.transpose(y, (0, 1, 3, 2, 4, 5))
    return ops.reshape(y, (b, h * p, w * p, d))


def block(x: Tensor, p: int) -> BlockedTensor:
    _check_rank4(x, "block")
    b, h, w, d = x.shape
    y = space_to_depth(x, p)
    y = ops.reshape(y, (b, (h * w) // (p * p), p * p, d))
    return BlockedTensor(y, p, h, w)


def grid_shape(m: int, n: int, aspect_ratio: float = 1.0) -> tuple[int, int, int]:
    """Recover (patch-grid rows, patch-grid cols, patch size) from ``m`` and ``n``."""
    p = math.isqrt(n)
    if p * p != n:
        raise BlockingError(f"patch length {n} is not a perfect square")
    if aspect_ratio <= 0:
        raise BlockingError("aspect ratio must be positive")
    gh = math.isqrt(int(round(m / aspect_ratio)))
    gw = int(round(gh * aspect_ratio))
    if gh < 1 or gh * gw != m or abs(gw / gh - aspect_ratio) > 1e-9:
        raise BlockingError(f"{m} patches do not form a grid with aspect ratio {aspect_ratio}")
    return gh, gw, p


def unblock(y: BlockedTensor | Tensor, aspect_ratio: float | None = None) -> Tensor:
    """Inverse of :func:`block`.

    A :class:`BlockedTensor` carries its own geometry; a bare ``[b, m, n, d]``
    tensor needs ``aspect_ratio`` (width / height, default 1).
    """
    if isinstance(y, BlockedTensor):
        if aspect_ratio is None:
            aspect_ratio = y.aspect_ratio
        y = y.data
    if aspect_ratio is None:
        aspect_ratio = 1.0
    if y.ndim != 4:
        raise BlockingError(f"unblock expects [b, m, n, d], got shape {y.shape}")
    b, m, n, d = y.shape
    gh, gw, p = grid_shape(m, n, aspect_ratio)
    x = ops.reshape(y, (b, gh, gw, d * n))
    return depth_to_space(x, p)


def pixel_shuffle(x: Tensor) -> Tensor:
    """Rate-2 depth-to-space upsampling: ``[b, h, w, d] -> [b, 2h, 2w, d/4]``."""
    _check_rank4(x, "pixel_shuffle")
    if x.shape[-1] % 4:
        raise BlockingError(f"pixel shuffle needs channels divisible by 4, got {x.shape[-1]}")
    return depth_to_space(x, 2)


def nearest_upsample(x: Tensor) -> Tensor:
    """Replicate every pixel into a 2x2 square."""
    _check_rank4(x, "nearest_upsample")
    b, h, w, d = x.shape
    y = ops.reshape(x, (b, h, 1, w, 1, d))
    y = ops.broadcast_to(y, (b, h, 2, w, 2, d))
    return ops.reshape(y, (b, 2 * h, 2 * w, d))
