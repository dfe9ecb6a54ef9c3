"""Property suites behind ``hitgen verify``.

Each property returns ``(max_error, threshold)``; it passes when
``max_error <= threshold``. Gradient properties are registered per primitive
op so a broken backward rule is reported under the op's own name.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracles
from .attention import (AttentionWeights, attention_block, axial_attention, blocked_attention, count_logits,
                        cross_attention_mqa, flop_count, full_attention_oracle, multi_head_attention,
                        random_weights)
from .blocking import block, depth_to_space, nearest_upsample, pixel_shuffle, space_to_depth, unblock
from .generator import build_generator, generate, preset
from .numerics import ops
from .numerics.contract import contract
from .numerics.gradcheck import finite_diff_check, kink_crossings, rel_error
from .numerics.nn import MlpWeights, NormParams, NormState, normalize
from .numerics.tensor import GradTape, Tensor, backward
from .training import ToyDiscriminator, r1_penalty

log = logging.getLogger(__name__)

SUITES = ("gradcheck", "equivalence", "roundtrip")
GRAD_TOL = 1e-6
LINEAR_GRAD_TOL = 1e-8
R1_TOL = 1e-4
EQUIV_TOL = 1e-12


@dataclass
class Outcome:
    name: str
    max_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error)) and self.max_error <= self.threshold

    def line(self) -> str:
        return f"{self.name},{self.max_error:.3e},{self.threshold:.0e},{'PASS' if self.passed else 'FAIL'}"


_REGISTRY: dict[str, list[tuple[str, Callable[[], tuple[float, float]]]]] = {s: [] for s in SUITES}


def prop(suite: str, name: str):
    def deco(fn):
        _REGISTRY[suite].append((f"{suite}.{name}", fn))
        return fn
    return deco


def properties(suite: str = "all") -> list[tuple[str, Callable]]:
    if suite == "all":
        return [p for s in SUITES for p in _REGISTRY[s]]
    if suite not in _REGISTRY:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES + ('all',)}")
    return list(_REGISTRY[suite])


def run_suite(suite: str = "all", on_result: Callable[[Outcome], None] | None = None) -> list[Outcome]:
    results = []
    for name, fn in properties(suite):
        try:
            err, tol = fn()
        except Exception:  # a crashing property is a failing property
            log.warning("%s raised", name, exc_info=True)
            err, tol = float("inf"), 0.0
        out = Outcome(name, float(err), float(tol))
        results.append(out)
        if on_result:
            on_result(out)
    return results


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng([20240, tag])


def _max_abs(a, b) -> float:
    a = a.data if isinstance(a, Tensor) else a
    b = b.data if isinstance(b, Tensor) else b
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) if np.size(a) else 0.0


def _bits_differ(a, b) -> float:
    """0.0 when bit-identical, otherwise the max absolute difference (or inf on shape mismatch)."""
    a = np.asarray(a.data if isinstance(a, Tensor) else a)
    b = np.asarray(b.data if isinstance(b, Tensor) else b)
    if a.shape != b.shape:
        return float("inf")
    if np.array_equal(a, b):
        return 0.0
    return max(_max_abs(a, b), np.finfo(np.float64).tiny)


# -- round trips --------------------------------------------------------------------------

def _all_shapes(max_side: int = 32):
    for p in (1, 2, 4, 8):
        for h in range(p, max_side + 1, p):
            for w in range(p, max_side + 1, p):
                yield p, h, w


@prop("roundtrip", "unblock_block")
def _rt_block():
    rng, worst = _rng(1), 0.0
    for p, h, w in _all_shapes():
        x = Tensor(rng.standard_normal((1, h, w, 2)))
        worst = max(worst, _bits_differ(unblock(block(x, p)), x))
    return worst, 0.0


@prop("roundtrip", "depth_to_space_space_to_depth")
def _rt_s2d():
    rng, worst = _rng(2), 0.0
    for p, h, w in _all_shapes():
        x = Tensor(rng.standard_normal((1, h, w, 2)))
        worst = max(worst, _bits_differ(depth_to_space(space_to_depth(x, p), p), x))
    return worst, 0.0


@prop("roundtrip", "pixel_shuffle_inverse")
def _rt_shuffle():
    rng, worst = _rng(3), 0.0
    for h, w in itertools.product((1, 2, 3, 5), (1, 4)):
        x = Tensor(rng.standard_normal((2, h, w, 8)))
        worst = max(worst, _bits_differ(space_to_depth(pixel_shuffle(x), 2), x))
    return worst, 0.0


@prop("roundtrip", "space_to_depth_index_map")
def _rt_s2d_map():
    worst = 0.0
    for p, (h, w) in itertools.product((1, 2, 4), ((4, 4), (8, 4), (4, 8))):
        x = np.arange(2 * h * w * 3, dtype=np.float64).reshape(2, h, w, 3)
        worst = max(worst, _bits_differ(space_to_depth(Tensor(x), p), oracles.space_to_depth_map(x, p)))
    return worst, 0.0


@prop("roundtrip", "block_index_map")
def _rt_block_map():
    worst = 0.0
    for p, (h, w) in itertools.product((1, 2, 4), ((4, 4), (8, 4), (4, 8))):
        x = np.arange(h * w * 2, dtype=np.float64).reshape(1, h, w, 2)
        worst = max(worst, _bits_differ(block(Tensor(x), p).data, oracles.block_map(x, p)))
    return worst, 0.0


@prop("roundtrip", "nearest_upsample_index_map")
def _rt_upsample():
    x = _rng(4).standard_normal((2, 3, 5, 2))
    return _bits_differ(nearest_upsample(Tensor(x)), oracles.nearest_upsample_map(x)), 0.0


@prop("roundtrip", "blocking_preserves_multiset")
def _rt_multiset():
    rng, worst = _rng(5), 0.0
    for p, h, w in ((2, 8, 4), (4, 16, 16), (8, 8, 32)):
        x = rng.standard_normal((1, h, w, 3))
        y = block(Tensor(x), p).data.data
        worst = max(worst, _bits_differ(np.sort(y, axis=None), np.sort(x, axis=None)))
    return worst, 0.0


# -- equivalence -------------------------------------------------------------------------------

def _masked_case(rng, b, m, n, h, d, mode):
    x = rng.standard_normal((b, m, n, d))
    y = rng.standard_normal((b, m, n, d))
    w = random_weights(rng, d, h, k=int(rng.integers(1, 5)), v=int(rng.integers(1, 5)))
    got = blocked_attention(Tensor(x), Tensor(y), w, mode).data.reshape(b, m * n, d)
    want = oracles.masked_attention(x.reshape(b, m * n, d), y.reshape(b, m * n, d), w.w_q.data, w.w_k.data,
                                    w.w_v.data, w.w_o.data, oracles.blocked_masks(m, n, h, mode))
    return _max_abs(got, want)


def _masked_sweep(mode: str, count: int, tag: int):
    rng, worst = _rng(tag), 0.0
    for _ in range(count):
        m, n = int(rng.integers(1, 9)), int(rng.integers(1, 17))
        h, d = int(rng.choice([2, 4])), int(rng.integers(1, 9))
        worst = max(worst, _masked_case(rng, int(rng.integers(1, 3)), m, n, h, d, mode))
    return worst, EQUIV_TOL


@prop("equivalence", "multi_axis_vs_masked_oracle")
def _eq_multi_axis():
    return _masked_sweep("multi_axis", 200, 10)


@prop("equivalence", "regional_only_vs_masked_oracle")
def _eq_regional():
    return _masked_sweep("regional_only", 50, 11)


@prop("equivalence", "dilated_only_vs_masked_oracle")
def _eq_dilated():
    return _masked_sweep("dilated_only", 50, 12)


@prop("equivalence", "full_vs_masked_oracle")
def _eq_full():
    return _masked_sweep("full", 50, 13)


def _single_axis_vs_full(tag: int, axis: str):
    rng, worst = _rng(tag), 0.0
    for _ in range(20):
        N, h, d = int(rng.integers(1, 17)), int(rng.choice([2, 4])), int(rng.integers(1, 9))
        x = rng.standard_normal((1, N, d))
        w = random_weights(rng, d, h)
        shape = (1, 1, N, d) if axis == "regional" else (1, N, 1, d)
        got = blocked_attention(Tensor(x.reshape(shape)), Tensor(x.reshape(shape)), w, f"{axis}_only")
        worst = max(worst, _max_abs(got.data.reshape(1, N, d), full_attention_oracle(Tensor(x), w)))
    return worst, EQUIV_TOL


@prop("equivalence", "single_patch_regional_is_full")
def _eq_m1():
    return _single_axis_vs_full(14, "regional")


@prop("equivalence", "unit_patch_dilated_is_full")
def _eq_n1():
    return _single_axis_vs_full(15, "dilated")


@prop("equivalence", "axial_vs_row_column_oracle")
def _eq_axial():
    rng, worst = _rng(16), 0.0
    for _ in range(20):
        r, c, h, d = int(rng.integers(1, 7)), int(rng.integers(1, 7)), int(rng.choice([2, 4])), int(rng.integers(1, 6))
        x = rng.standard_normal((1, r, c, d))
        w = random_weights(rng, d, h)
        got = axial_attention(Tensor(x), w).data.reshape(1, r * c, d)
        flat = x.reshape(1, r * c, d)
        want = oracles.masked_attention(flat, flat, w.w_q.data, w.w_k.data, w.w_v.data, w.w_o.data,
                                        oracles.blocked_masks(r, c, h, "axial"))
        worst = max(worst, _max_abs(got, want))
    return worst, EQUIV_TOL


@prop("equivalence", "mqa_vs_tied_mha")
def _eq_mqa():
    rng, worst = _rng(17), 0.0
    for _ in range(10):
        N, h, d = int(rng.integers(1, 20)), int(rng.choice([1, 2, 4])), int(rng.integers(2, 9))
        w = random_weights(rng, d, h)
        x = Tensor(rng.standard_normal((2, N, d)))
        tied_k = Tensor(np.broadcast_to(w.w_k.data, (h,) + w.w_k.shape).copy())
        tied_v = Tensor(np.broadcast_to(w.w_v.data, (h,) + w.w_v.shape).copy())
        worst = max(worst, _bits_differ(multi_head_attention(x, w.w_q, tied_k, tied_v, w.w_o),
                                        full_attention_oracle(x, w)))
    return worst, EQUIV_TOL


@prop("equivalence", "cross_attention_vs_loop")
def _eq_cross():
    rng, worst = _rng(18), 0.0
    for _ in range(5):
        b, N, L, d, c, h = 2, int(rng.integers(1, 10)), int(rng.integers(1, 10)), 8, 6, 2
        w = random_weights(rng, d, h, kv_dim=c)
        x, z, pz = rng.standard_normal((b, N, d)), rng.standard_normal((b, L, c)), rng.standard_normal((L, c))
        got = cross_attention_mqa(Tensor(x), Tensor(z), Tensor(pz), w).data
        want = np.zeros((b, N, d))
        kv = z + pz
        for bi, hi, i in itertools.product(range(b), range(h), range(N)):
            q = x[bi, i] @ w.w_q.data[hi] / math.sqrt(w.key_dim)
            logits = np.array([q @ (kv[bi, j] @ w.w_k.data) for j in range(L)])
            e = np.exp(logits - logits.max())
            s = e / e.sum()
            val = sum(s[j] * (kv[bi, j] @ w.w_v.data) for j in range(L))
            want[bi, i] += w.w_o.data[hi] @ val
        worst = max(worst, _max_abs(got, want))
    return worst, EQUIV_TOL


@prop("equivalence", "contract_vs_loop_oracle")
def _eq_contract():
    rng, worst = _rng(19), 0.0
    specs = ["ij,jk->ik", "bmnd,hdk->bhmnk", "bhyxz,bzyv->bhxyv", "bhxyk,bxzk->bhxyz", "ab,cb->", "ijk,k->ji",
             "ab,ab->ab", "abc,d->dcab"]
    for spec in specs:
        lhs = spec.split("->")[0].split(",")
        labels = sorted(set("".join(lhs)))
        ext = {c: int(rng.integers(1, 4)) for c in labels}
        # integer-valued inputs make every partial sum exact, whatever the summation order
        A = rng.integers(-5, 6, size=[ext[c] for c in lhs[0]]).astype(np.float64)
        B = rng.integers(-5, 6, size=[ext[c] for c in lhs[1]]).astype(np.float64)
        worst = max(worst, _bits_differ(contract(spec, A, B), oracles.loop_contract(spec, A, B)))
    return worst, 0.0


@prop("equivalence", "flop_count_matches_instrumented_kernel")
def _eq_flops():
    rng, worst = _rng(20), 0.0
    for mode in ("multi_axis", "regional_only", "dilated_only", "full", "axial"):
        for _ in range(5):
            b, m, n, h = int(rng.integers(1, 3)), int(rng.integers(1, 7)), int(rng.integers(1, 7)), 2
            w = random_weights(rng, 4, h)
            x = Tensor(rng.standard_normal((b, m, n, 4)))
            with count_logits() as tally:
                blocked_attention(x, x, w, mode)
            worst = max(worst, abs(tally[0] - flop_count(mode, b, m, n, h=h)))
    return float(worst), 0.0


@prop("equivalence", "tape_replay_bit_exact")
def _eq_replay():
    params = build_generator(preset("toy_32"), seed=3)
    z = Tensor(_rng(21).standard_normal((2, 16)))
    with GradTape() as tape:
        tape.watch(z)
        generate(params, z, mode="eval")
    replayed = tape.replay()
    worst = max(_bits_differ(r, o.data) for r, o in zip(replayed, tape.outputs))
    return worst, 0.0


@prop("equivalence", "permutation_equivariance")
def _eq_perm():
    rng, worst = _rng(22), 0.0
    for axis in (1, 2):
        x = rng.standard_normal((1, 4, 6, 8))
        w = random_weights(rng, 8, 4)
        perm = rng.permutation(x.shape[axis])
        out = blocked_attention(Tensor(x), Tensor(x), w).data
        xp = np.take(x, perm, axis=axis)
        outp = blocked_attention(Tensor(xp), Tensor(xp), w).data
        worst = max(worst, _max_abs(outp, np.take(out, perm, axis=axis)))
    return worst, EQUIV_TOL


# -- gradcheck -----------------------------------------------------------------------------

def _grad_op(fn: Callable[..., Tensor], shapes, tag: int, positive: bool = False, away_from_zero: bool = False,
             tol: float = GRAD_TOL):
    rng = _rng(100 + tag)

    def draw(shape):
        a = rng.standard_normal(shape)
        if positive:
            a = np.abs(a) + 0.5
        if away_from_zero:
            a = np.sign(a) * (np.abs(a) + 0.2)
        return Tensor(a, requires_grad=True)

    xs = [draw(s) for s in shapes]
    probe = None

    def f():
        nonlocal probe
        y = fn(*xs)
        if probe is None:
            probe = Tensor(rng.standard_normal(y.shape))
        return ops.sum(ops.mul(y, probe)) if y.ndim else y

    fn(*xs)  # fix the probe shape before the tape runs
    f()
    return finite_diff_check(f, xs).max_rel_error, tol


_OP_CHECKS = {
    "add": (lambda a, b: ops.add(a, b), [(3, 4), (4,)], {}),
    "sub": (lambda a, b: ops.sub(a, b), [(3, 1), (3, 4)], {}),
    "mul": (lambda a, b: ops.mul(a, b), [(2, 3), (2, 3)], {}),
    "div": (lambda a, b: ops.div(a, b), [(2, 3), (3,)], {"away_from_zero": True}),
    "neg": (lambda a: ops.neg(a), [(5,)], {}),
    "exp": (lambda a: ops.exp(a), [(2, 3)], {}),
    "log": (lambda a: ops.log(a), [(2, 3)], {"positive": True}),
    "power": (lambda a: ops.add(ops.power(a, 3.0), ops.power(a, 0.5)), [(4,)], {"positive": True}),
    "relu": (lambda a: ops.relu(a), [(3, 4)], {"away_from_zero": True}),
    "sigmoid": (lambda a: ops.sigmoid(a), [(6,)], {}),
    "softplus": (lambda a: ops.softplus(a), [(6,)], {}),
    "sum": (lambda a: ops.add(ops.sum(a, axis=(0, 2), keepdims=True), ops.sum(a, axis=1, keepdims=True)),
            [(2, 3, 4)], {}),
    "reshape": (lambda a: ops.reshape(a, (4, 3)), [(2, 6)], {}),
    "transpose": (lambda a: ops.transpose(a, (2, 0, 1)), [(2, 3, 4)], {}),
    "broadcast_to": (lambda a: ops.broadcast_to(a, (3, 2, 4)), [(2, 1)], {}),
    "slice": (lambda a: ops.slice_axis(a, 1, 1, 3), [(2, 4)], {}),
    "pad": (lambda a: ops.pad(a, 0, 1, 2), [(2, 3)], {}),
    "softmax": (lambda a: ops.add(ops.softmax(a, axis=-1), ops.softmax(a, axis=0)), [(3, 4)], {}),
    "contract": (lambda a, b: ops.add(contract("bij,jk->bik", a, b), contract("bij,kj->bik", a, b)),
                 [(2, 3, 3), (3, 3)], {}),
}

for _i, (_op, (_fn, _shapes, _kw)) in enumerate(_OP_CHECKS.items()):
    prop("gradcheck", _op)(lambda fn=_fn, shapes=_shapes, kw=_kw, i=_i: _grad_op(fn, shapes, i, **kw))


@prop("gradcheck", "normalize_layer_and_batch")
def _gc_norm():
    rng = _rng(150)
    x = Tensor(rng.standard_normal((2, 4, 4, 3)), requires_grad=True)
    scale = Tensor(rng.standard_normal(3) + 1.0, requires_grad=True)
    shift = Tensor(rng.standard_normal(3), requires_grad=True)
    probe = rng.standard_normal(x.shape)
    worst = 0.0
    for kind, mode in (("layer", "train"), ("batch", "train"), ("batch", "batch")):
        def f(kind=kind, mode=mode):
            state = NormState(3).populate()
            return ops.sum(normalize(x, kind, scale, shift, state, mode) * probe)
        worst = max(worst, finite_diff_check(f, [x, scale, shift]).max_rel_error)
    return worst, GRAD_TOL


@prop("gradcheck", "blocking_maps")
def _gc_blocking():
    rng = _rng(151)
    x = Tensor(rng.standard_normal((1, 4, 8, 2)), requires_grad=True)
    probe = [rng.standard_normal((1, 8, 4, 2)), rng.standard_normal((1, 2, 4, 8)), rng.standard_normal((1, 8, 16, 2)),
             rng.standard_normal((1, 4, 8, 2))]

    def f():
        t = ops.sum(block(x, 2).data * probe[0]) + ops.sum(space_to_depth(x, 2) * probe[1])
        t = t + ops.sum(nearest_upsample(x) * probe[2])
        return t + ops.sum(unblock(block(x, 4)) * probe[3])
    return finite_diff_check(f, [x]).max_rel_error, LINEAR_GRAD_TOL


@prop("gradcheck", "multi_axis_attention_mlp_block")
def _gc_attention_block():
    rng = _rng(152)
    x = Tensor(rng.standard_normal((1, 16, 16, 4)), requires_grad=True)
    w = random_weights(rng, 4, 2)
    mlp = MlpWeights(*(Tensor(rng.standard_normal(s) * 0.5, requires_grad=True)
                       for s in ((4, 16), (16,), (16, 4), (4,))))
    norms = [NormParams(Tensor(np.ones(4), requires_grad=True), Tensor(np.zeros(4), requires_grad=True),
                        NormState(4).populate()) for _ in range(2)]
    probe = rng.standard_normal(x.shape)
    params = [x, w.w_q, w.w_k, w.w_v, w.w_o, mlp.w1, mlp.b1, mlp.w2, mlp.b2]
    for t in params:
        t.requires_grad = True

    def f():
        y = attention_block(x, lambda t: blocked_attention(t, t, w), "layer", norms[0], norms[1], mlp)
        return ops.sum(y * probe)
    return finite_diff_check(f, params, max_coords=40).max_rel_error, GRAD_TOL


@prop("gradcheck", "attention_variants")
def _gc_variants():
    rng, worst = _rng(153), 0.0
    for mode in ("multi_axis", "regional_only", "dilated_only", "full", "axial"):
        x = Tensor(rng.standard_normal((1, 3, 4, 4)), requires_grad=True)
        w = random_weights(rng, 4, 2)
        probe = rng.standard_normal(x.shape)
        params = [x, w.w_q, w.w_k, w.w_v, w.w_o]

        def f(mode=mode, x=x, w=w, probe=probe):
            return ops.sum(blocked_attention(x, x, w, mode) * probe)
        worst = max(worst, finite_diff_check(f, params).max_rel_error)
    return worst, GRAD_TOL


@prop("gradcheck", "full_attention_1x8x16")
def _gc_full():
    rng = _rng(154)
    x = Tensor(rng.standard_normal((1, 8, 16)), requires_grad=True)
    w = random_weights(rng, 16, 2)
    return finite_diff_check(lambda: ops.sum(full_attention_oracle(x, w)), [x]).max_rel_error, GRAD_TOL


@prop("gradcheck", "cross_attention")
def _gc_cross():
    rng = _rng(155)
    x = Tensor(rng.standard_normal((2, 5, 8)), requires_grad=True)
    z = Tensor(rng.standard_normal((2, 6, 4)), requires_grad=True)
    pz = Tensor(rng.standard_normal((6, 4)), requires_grad=True)
    w = random_weights(rng, 8, 2, kv_dim=4)
    probe = rng.standard_normal(x.shape)
    params = [x, z, pz, w.w_q, w.w_k, w.w_v, w.w_o]
    return finite_diff_check(lambda: ops.sum(cross_attention_mqa(x, z, pz, w) * probe), params).max_rel_error, GRAD_TOL


def _redraw_until_kink_free(f, params, z: Tensor, tag: int, **sampling) -> None:
    """Redraw the latent in place until no +-h probe flips a ReLU (central differences are blind at kinks)."""
    for attempt in range(50):
        if kink_crossings(f, params, **sampling) == 0:
            return
        z.data[...] = _rng(tag * 1000 + attempt).standard_normal(z.shape)
    raise RuntimeError("no kink-free latent found")


@prop("gradcheck", "toy_generator_latent")
def _gc_gen_z():
    params = build_generator(preset("toy_32"), seed=7)
    z = Tensor(_rng(156).standard_normal((1, 16)), requires_grad=True)

    def f():
        return ops.sum(generate(params, z, mode="eval"))
    _redraw_until_kink_free(f, [z], z, 156)
    return finite_diff_check(f, [z]).max_rel_error, GRAD_TOL


@prop("gradcheck", "toy_generator_parameters")
def _gc_gen_params():
    params = build_generator(preset("toy_32"), seed=8)
    rng = _rng(157)
    z = Tensor(rng.standard_normal((2, 16)))
    probe = rng.standard_normal((2, 32, 32, 3))

    def f():
        return ops.sum(generate(params, z, mode="eval") * probe)
    _redraw_until_kink_free(f, params.parameters(), z, 157, max_coords=3, seed=1)
    return finite_diff_check(f, params.parameters(), max_coords=3, seed=1).max_rel_error, GRAD_TOL


@prop("gradcheck", "r1_input_gradient")
def _gc_r1_value():
    rng = _rng(158)
    D = ToyDiscriminator.create((4, 4, 3), hidden=8, seed=2)
    x = rng.standard_normal((3, 4, 4, 3))
    r1 = float(r1_penalty(D, x).data)
    h, total = 1e-5, 0.0
    for i in range(x.shape[0]):
        g = np.zeros(x[i].size)
        for j in range(g.size):
            xp, xm = x[i].copy().reshape(-1), x[i].copy().reshape(-1)
            xp[j] += h
            xm[j] -= h
            g[j] = (float(D(Tensor(xp.reshape(1, 4, 4, 3))).data[0])
                    - float(D(Tensor(xm.reshape(1, 4, 4, 3))).data[0])) / (2 * h)
        total += g @ g
    return float(rel_error(r1, total / x.shape[0])), R1_TOL


@prop("gradcheck", "r1_through_training")
def _gc_r1_train():
    rng = _rng(159)
    D = ToyDiscriminator.create((4, 4, 3), hidden=8, seed=3)
    x = rng.standard_normal((3, 4, 4, 3))
    gamma = 10.0
    return (finite_diff_check(lambda: r1_penalty(D, x, create_graph=True) * gamma, D.parameters()).max_rel_error,
            R1_TOL)


def exit_code(results: list[Outcome]) -> int:
    return 0 if all(r.passed for r in results) else 1
