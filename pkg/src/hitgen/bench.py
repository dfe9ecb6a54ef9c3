"""Attention cost benchmark: logit counts and wall time per (N, mode) cell."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .attention import MODES, blocked_attention, count_logits, flop_count, random_weights
from .numerics.tensor import Tensor

BENCH_HEADER = ("N", "mode", "logit_count", "wall_ns_median")


@dataclass
class BenchRow:
    N: int
    mode: str
    logit_count: int
    wall_ns_median: int | None  # None when the cell was skipped

    def cells(self):
        return (self.N, self.mode, self.logit_count,
                "skipped" if self.wall_ns_median is None else self.wall_ns_median)


def balanced_shape(N: int) -> tuple[int, int]:
    s = math.isqrt(N)
    if s * s != N:
        raise ValueError(f"benchmark sizes must be perfect squares, got {N}")
    return s, s


def _layer(x: Tensor, w, mode: str) -> Tensor:
    if mode == "interleaved":
        # one regional and one dilated layer, reported per layer
        return blocked_attention(blocked_attention(x, x, w, "regional_only"), x, w, "dilated_only")
    return blocked_attention(x, x, w, mode)


def bench_cell(N: int, mode: str, repeats: int = 3, heads: int = 2, dim: int = 32, batch: int = 1,
               dtype=np.float32, seed: int = 0) -> BenchRow:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    m, n = balanced_shape(N)
    expected = flop_count(mode, batch, m, n, h=heads)
    rng = np.random.default_rng(seed)
    w = random_weights(rng, dim, heads, dtype=dtype)
    x = Tensor(rng.standard_normal((batch, m, n, dim)).astype(dtype))
    times = []
    try:
        for _ in range(repeats):
            with count_logits() as tally:
                t0 = time.perf_counter_ns()
                _layer(x, w, mode)
                elapsed = time.perf_counter_ns() - t0
            layers = 2 if mode == "interleaved" else 1
            times.append(elapsed // layers)
            counted = tally[0] // layers
            if counted != expected:
                raise AssertionError(f"{mode} at N={N}: computed {counted} logits, formula says {expected}")
    except MemoryError:
        return BenchRow(N, mode, expected, None)
    return BenchRow(N, mode, expected, int(statistics.median(times)))


def check_ratios(rows: list[BenchRow]) -> None:
    """Assert full/multi-axis logit ratios equal sqrt(N) exactly."""
    by = {(r.N, r.mode): r.logit_count for r in rows}
    for N in sorted({r.N for r in rows}):
        if (N, "full") in by and (N, "multi_axis") in by:
            full, ma = by[N, "full"], by[N, "multi_axis"]
            if full != ma * math.isqrt(N):
                raise AssertionError(f"N={N}: full/multi_axis logit ratio {full}/{ma} != sqrt(N)")


def run_bench(sizes, modes, repeats: int = 3, heads: int = 2, dim: int = 32, dtype=np.float32,
              seed: int = 0) -> list[BenchRow]:
    rows = [bench_cell(N, mode, repeats, heads, dim, dtype=dtype, seed=seed)
            for N in sorted(sizes) for mode in modes]
    check_ratios(rows)
    return rows


def wall_ratios(rows: list[BenchRow], num: str = "full", den: str = "multi_axis") -> list[tuple[int, float]]:
    by = {(r.N, r.mode): r.wall_ns_median for r in rows}
    out = []
    for N in sorted({r.N for r in rows}):
        a, b = by.get((N, num)), by.get((N, den))
        if a and b:
            out.append((N, a / b))
    return out
