"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import GradTape, Tensor, backward


@dataclass
class GradcheckReport:
    max_rel_error: float
    worst: tuple[int, int]  # (parameter index, flat coordinate)
    analytic: list[np.ndarray]
    numeric: list[np.ndarray]
    coords: list[np.ndarray]

    def passed(self, tol: float) -> bool:
        return self.max_rel_error <= tol


def rel_error(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
                      max_coords: int | None = None, seed: int = 0) -> GradcheckReport:
    """Compare tape gradients of ``f()`` against central differences.

    ``f`` takes no arguments and reads ``params`` directly; coordinates are
    perturbed in place and restored. ``max_coords`` samples at most that many
    coordinates per parameter.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    with GradTape() as tape:
        tape.watch(*params)
        loss = f()
    if not np.all(np.isfinite(loss.data)):
        raise FloatingPointError("non-finite objective at the base point")
    analytic = [g.data for g in backward(tape, loss, params)]

    rng = np.random.default_rng(seed)
    numeric, coords = [], []
    for p in params:
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        est = np.empty(idx.size)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"non-finite objective at coordinate {i}")
            est[j] = (fp - fm) / (2 * h)
        numeric.append(est)
        coords.append(idx)

    worst, worst_err = (0, 0), 0.0
    for k, (a, n, idx) in enumerate(zip(analytic, numeric, coords)):
        if idx.size == 0:
            continue
        err = rel_error(a.reshape(-1)[idx], n)
        j = int(np.argmax(err))
        if err[j] > worst_err:
            worst_err, worst = float(err[j]), (k, int(idx[j]))
    return GradcheckReport(worst_err, worst, analytic, numeric, coords)


def _relu_signs(f: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    with GradTape() as tape:
        tape.watch(*params)
        f()
    return [n.inputs[0].data > 0 for n in tape.nodes if n.op == "relu"]


def kink_crossings(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
                   max_coords: int | None = None, seed: int = 0) -> int:
    """Count the +-h probes (same sampling as ``finite_diff_check``) that flip any ReLU input's sign.

    Central differences straddling a ReLU kink measure a blend of two slopes;
    a point with zero crossings is one where the comparison is meaningful.
    """
    base = _relu_signs(f, params)
    rng = np.random.default_rng(seed)
    crossings = 0
    for p in params:
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for i in idx:
            orig = flat[i]
            for step in (h, -h):
                flat[i] = orig + step
                signs = _relu_signs(f, params)
                crossings += any(not np.array_equal(a, b) for a, b in zip(base, signs))
            flat[i] = orig
    return crossings
