"""Dense tensors and the gradient tape.

Every differentiable primitive is a pair of rules: a numpy forward rule in
``FORWARD_RULES`` and a backward rule in ``BACKWARD_RULES``. Backward rules
are written in terms of :class:`Tensor` operations themselves, so gradients
computed with ``create_graph=True`` are recorded on any enclosing tape and
can be differentiated again.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPES = (np.float32, np.float64)

# op name -> forward(*arrays, **attrs) -> array
FORWARD_RULES: dict[str, Callable[..., np.ndarray]] = {}
# op name -> backward(grad_out, inputs, output, **attrs) -> tuple of grads (Tensor | None)
BACKWARD_RULES: dict[str, Callable[..., tuple]] = {}


class ShapeError(ValueError):
    pass


class GradientError(RuntimeError):
    pass


class Tensor:
    """An n-dimensional float array.

    ``requires_grad`` marks a trainable leaf: any active tape tracks it
    without an explicit ``watch``.
    """

    __array_priority__ = 100
    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None and np.dtype(dtype) not in DTYPES:
            raise TypeError(f"unsupported dtype {np.dtype(dtype)}; use float32 or float64")
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in DTYPES:
            arr = arr.astype(np.float64)
        if any(s == 0 for s in arr.shape):
            raise ShapeError(f"zero-extent axis in shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def __len__(self):
        return self.shape[0]

    # Operators. Imported lazily to avoid a cycle with ops.py.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __pow__(self, p):
        from . import ops
        return ops.power(self, p)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *perm):
        from . import ops
        if len(perm) == 1 and isinstance(perm[0], (tuple, list)):
            perm = tuple(perm[0])
        return ops.transpose(self, perm or None)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    attrs: dict = field(default_factory=dict)


_local = threading.local()


def _active_tapes() -> list["GradTape"]:
    tapes = getattr(_local, "tapes", None)
    if tapes is None:
        tapes = _local.tapes = []
    return tapes


class GradTape:
    """Records primitive operations for reverse-mode differentiation.

    Use as a context manager. Nested tapes record independently; computing
    gradients with ``create_graph=True`` inside an outer tape makes those
    gradients differentiable by the outer tape.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._tracked: dict[int, Tensor] = {}
        self.recording = False

    def __enter__(self):
        self.recording = True
        _active_tapes().append(self)
        return self

    def __exit__(self, *exc):
        self.recording = False
        _active_tapes().remove(self)
        return False

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            self._tracked[id(t)] = t

    def is_tracked(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._tracked

    def _record(self, node: Node) -> None:
        self.nodes.append(node)
        self._tracked[id(node.output)] = node.output
        for t in node.inputs:
            if t.requires_grad and id(t) not in self._tracked:
                self._tracked[id(t)] = t

    @property
    def outputs(self) -> list[Tensor]:
        return [n.output for n in self.nodes]

    def gradient(self, target: Tensor, sources: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
        return backward(self, target, sources, create_graph=create_graph)

    def replay(self) -> list[np.ndarray]:
        """Re-run every recorded forward rule from the leaf values.

        Returns the recomputed outputs in tape order.
        """
        values: dict[int, np.ndarray] = {}
        out = []
        for node in self.nodes:
            args = [values.get(id(t), t.data) for t in node.inputs]
            val = FORWARD_RULES[node.op](*args, **node.attrs)
            values[id(node.output)] = val
            out.append(val)
        return out


@contextmanager
def no_record():
    """Suspend every active tape on this thread."""
    tapes = list(_active_tapes())
    saved = [t.recording for t in tapes]
    for t in tapes:
        t.recording = False
    try:
        yield
    finally:
        for t, s in zip(tapes, saved):
            t.recording = s


def apply(op: str, inputs: Sequence[Tensor], **attrs) -> Tensor:
    """Run primitive ``op`` and record it on every tape that tracks an input."""
    out = Tensor(FORWARD_RULES[op](*(t.data for t in inputs), **attrs))
    tapes = _active_tapes()
    if tapes:
        inputs = tuple(inputs)
        for tape in tapes:
            if tape.recording and any(tape.is_tracked(t) for t in inputs):
                tape._record(Node(op, inputs, out, attrs))
    return out


def backward(tape: GradTape, loss: Tensor, sources: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradient of scalar ``loss`` with respect to each source.

    Sources that ``loss`` does not depend on get zero gradients.
    """
    if loss.size != 1:
        raise GradientError(f"loss must be scalar, got shape {loss.shape}")
    produced = {id(n.output) for n in tape.nodes}
    if id(loss) not in produced and not any(loss is s for s in sources):
        raise GradientError("loss was not recorded on this tape")

    from . import ops

    grads: dict[int, Tensor] = {id(loss): Tensor(np.ones_like(loss.data))}
    was_recording = tape.recording
    tape.recording = False
    ctx = _null() if create_graph else no_record()
    try:
        with ctx:
            for node in reversed(tape.nodes):
                g = grads.get(id(node.output))
                if g is None:
                    continue
                rule = BACKWARD_RULES[node.op]
                in_grads = rule(g, node.inputs, node.output, **node.attrs)
                for t, gi in zip(node.inputs, in_grads):
                    if gi is None or not tape.is_tracked(t):
                        continue
                    if gi.shape != t.shape:
                        raise GradientError(
                            f"backward rule for {node.op!r} produced shape {gi.shape} for input {t.shape}")
                    prev = grads.get(id(t))
                    grads[id(t)] = gi if prev is None else ops.add(prev, gi)
    finally:
        tape.recording = was_recording
    result = []
    for s in sources:
        g = grads.get(id(s))
        result.append(g if g is not None else Tensor(np.zeros_like(s.data)))
    return result


@contextmanager
def _null():
    yield


def tensors_equal(a: Iterable[np.ndarray], b: Iterable[np.ndarray]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))
