"""Two-operand labeled tensor contraction (einsum subset).

Supported: ``"<labels A>,<labels B>-><labels out>"`` where each label occurs
at most once per operand and at most twice overall. Labels shared by both
operands and the output are batch axes, labels shared by both operands only
are summed, and labels private to one operand are either kept (if in the
output) or summed away first. The product itself is one batched ``matmul``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import ops
from .tensor import ShapeError, Tensor, apply, as_tensor
from .ops import primitive


class ContractionError(ShapeError):
    pass


@dataclass(frozen=True)
class Plan:
    a: str
    b: str
    out: str
    batch: str
    summed: str
    free_a: str
    free_b: str


@lru_cache(maxsize=512)
def parse(spec: str) -> Plan:
    spec = spec.replace(" ", "")
    if "->" not in spec:
        raise ContractionError(f"missing '->' in {spec!r}")
    lhs, out = spec.split("->")
    operands = lhs.split(",")
    if len(operands) != 2:
        raise ContractionError(f"expected two operands in {spec!r}")
    a, b = operands
    for labels in (a, b, out):
        if not all(c.isalpha() for c in labels):
            raise ContractionError(f"labels must be letters in {spec!r}")
    for name, labels in (("first operand", a), ("second operand", b), ("output", out)):
        if len(set(labels)) != len(labels):
            raise ContractionError(f"repeated label in {name} of {spec!r}")
    for c in set(a + b):
        if (a + b).count(c) > 2:
            raise ContractionError(f"label {c!r} appears more than twice in {spec!r}")
    missing = set(out) - set(a) - set(b)
    if missing:
        raise ContractionError(f"output labels {sorted(missing)} not in inputs of {spec!r}")
    batch = "".join(c for c in a if c in b and c in out)
    summed = "".join(c for c in a if c in b and c not in out)
    free_a = "".join(c for c in a if c not in b and c in out)
    free_b = "".join(c for c in b if c not in a and c in out)
    return Plan(a, b, out, batch, summed, free_a, free_b)


def _extents(plan: Plan, sa, sb) -> dict[str, int]:
    if len(sa) != len(plan.a) or len(sb) != len(plan.b):
        raise ContractionError(
            f"rank mismatch: '{plan.a}' vs shape {tuple(sa)}, '{plan.b}' vs shape {tuple(sb)}")
    ext = dict(zip(plan.a, sa))
    for c, n in zip(plan.b, sb):
        if c in ext and ext[c] != n:
            raise ContractionError(f"label {c!r} has extents {ext[c]} and {n}")
        ext[c] = n
    return ext


def _contract_np(A: np.ndarray, B: np.ndarray, spec: str) -> np.ndarray:
    plan = parse(spec)
    ext = _extents(plan, A.shape, B.shape)
    # sum away labels private to one operand and absent from the output
    drop_a = tuple(i for i, c in enumerate(plan.a) if c not in plan.b and c not in plan.out)
    if drop_a:
        A = A.sum(axis=drop_a)
    la = "".join(c for c in plan.a if c in plan.b or c in plan.out)
    drop_b = tuple(i for i, c in enumerate(plan.b) if c not in plan.a and c not in plan.out)
    if drop_b:
        B = B.sum(axis=drop_b)
    lb = "".join(c for c in plan.b if c in plan.a or c in plan.out)

    def size(labels):
        return math.prod(ext[c] for c in labels)

    A = np.transpose(A, [la.index(c) for c in plan.batch + plan.free_a + plan.summed])
    B = np.transpose(B, [lb.index(c) for c in plan.batch + plan.summed + plan.free_b])
    A = A.reshape(size(plan.batch), size(plan.free_a), size(plan.summed))
    B = B.reshape(size(plan.batch), size(plan.summed), size(plan.free_b))
    C = np.matmul(A, B)
    got = plan.batch + plan.free_a + plan.free_b
    C = C.reshape(tuple(ext[c] for c in got))
    C = np.transpose(C, [got.index(c) for c in plan.out])
    return C if C.flags.c_contiguous else C.copy()  # ascontiguousarray would promote 0-d to 1-d


def _grad_for(g: Tensor, other: Tensor, plan: Plan, g_labels: str, o_labels: str, target: str,
              target_shape) -> Tensor:
    # labels of the target that neither g nor the other operand carry were summed in forward
    kept = "".join(c for c in target if c in g_labels or c in o_labels)
    res = contract(f"{g_labels},{o_labels}->{kept}", g, other)
    if kept == target:
        return res
    shape = [target_shape[i] if c in kept else 1 for i, c in enumerate(target)]
    return ops.broadcast_to(ops.reshape(res, shape), target_shape)


def _contract_backward(g, ins, out, spec):
    plan = parse(spec)
    A, B = ins
    ga = _grad_for(g, B, plan, plan.out, plan.b, plan.a, A.shape)
    gb = _grad_for(g, A, plan, plan.out, plan.a, plan.b, B.shape)
    return ga, gb


primitive("contract", _contract_np, _contract_backward)


def contract(spec: str, A, B) -> Tensor:
    """Contract ``A`` and ``B`` according to an einsum-style ``spec``.

    >>> contract("ij,jk->ik", Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2)))).data
    array([[3., 3.],
           [3., 3.]])
    """
    A = as_tensor(A)
    B = as_tensor(B, like=A)
    plan = parse(spec)
    _extents(plan, A.shape, B.shape)
    return apply("contract", [A, B], spec=spec.replace(" ", ""))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Last-axis by first-axis product, applied over all leading axes of ``a``."""
    lead = "abcdefghijklmnopqrstuvwxyz"[: a.ndim - 1]
    return contract(f"{lead}Z,ZO->{lead}O", a, b)
