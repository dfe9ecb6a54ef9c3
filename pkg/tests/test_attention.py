import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitgen import oracles
from hitgen.attention import (AttentionError, AttentionWeights, attention_block, axial_attention, balance_patch_size,
                              blocked_attention, count_logits, cross_attention_mqa, flop_count,
                              full_attention_oracle, multi_axis_attention, multi_head_attention, random_weights)
from hitgen.blocking import block
from hitgen.numerics import MlpWeights, NormParams, NormState, Tensor, contract, finite_diff_check, ops

RNG = np.random.default_rng(5)


def heads_slice(w: AttentionWeights, lo: int, hi: int) -> AttentionWeights:
    return AttentionWeights(Tensor(w.w_q.data[lo:hi]), w.w_k, w.w_v, Tensor(w.w_o.data[lo:hi]))


def own_value(x: np.ndarray, w: AttentionWeights) -> np.ndarray:
    """Output when every head's softmax is a singleton: sum_h W_o[h] (x W_v)."""
    return np.einsum("...v,hdv->...d", x @ w.w_v.data, w.w_o.data)


def masked(x, y, w, masks):
    b, m, n, d = x.shape
    return oracles.masked_attention(x.reshape(b, m * n, d), y.reshape(b, m * n, d), w.w_q.data, w.w_k.data,
                                    w.w_v.data, w.w_o.data, masks).reshape(x.shape)


# -- multi-axis kernel --------------------------------------------------------------------

def test_single_patch_splits_into_own_value_and_full_attention():
    n, d, h = 9, 6, 4
    x = RNG.standard_normal((2, 1, n, d))
    w = random_weights(RNG, d, h)
    got = blocked_attention(Tensor(x), Tensor(x), w).data
    dilated = own_value(x, heads_slice(w, 0, h // 2))
    regional = full_attention_oracle(Tensor(x[:, 0]), heads_slice(w, h // 2, h)).data[:, None]
    np.testing.assert_allclose(got, dilated + regional, rtol=0, atol=1e-13)


def test_unit_patch_splits_into_full_attention_and_own_value():
    m, d, h = 7, 5, 2
    x = RNG.standard_normal((1, m, 1, d))
    w = random_weights(RNG, d, h)
    got = blocked_attention(Tensor(x), Tensor(x), w).data
    dilated = full_attention_oracle(Tensor(x[:, :, 0]), heads_slice(w, 0, h // 2)).data[:, :, None]
    regional = own_value(x, heads_slice(w, h // 2, h))
    np.testing.assert_allclose(got, dilated + regional, rtol=0, atol=1e-13)


def test_random_blocked_input_matches_masked_oracle():
    x = RNG.standard_normal((1, 4, 4, 8))
    w = random_weights(RNG, 8, 4, k=4, v=4)
    got = blocked_attention(Tensor(x), Tensor(x), w).data
    want = masked(x, x, w, oracles.blocked_masks(4, 4, 4, "multi_axis"))
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 16), st.sampled_from([2, 4]), st.integers(1, 8),
       st.sampled_from(["multi_axis", "regional_only", "dilated_only", "full"]), st.integers(0, 2 ** 31))
def test_blocked_modes_match_masked_oracle(m, n, h, d, mode, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, m, n, d)), rng.standard_normal((2, m, n, d))
    w = random_weights(rng, d, h)
    got = blocked_attention(Tensor(x), Tensor(y), w, mode).data
    np.testing.assert_allclose(got, masked(x, y, w, oracles.blocked_masks(m, n, h, mode)), rtol=0, atol=1e-12)


def test_multi_axis_on_blocked_tensor_keeps_geometry():
    img = Tensor(RNG.standard_normal((1, 8, 16, 4)))
    xb = block(img, 4)
    out = multi_axis_attention(xb, xb, random_weights(RNG, 4, 2))
    assert (out.patch_size, out.height, out.width) == (4, 8, 16)
    with pytest.raises(AttentionError):
        multi_axis_attention(xb, block(Tensor(RNG.standard_normal((1, 16, 8, 4))), 4), random_weights(RNG, 4, 2))


def test_kernel_errors():
    w3 = random_weights(RNG, 6, 3)
    x = Tensor(RNG.standard_normal((1, 2, 4, 6)))
    with pytest.raises(AttentionError):
        blocked_attention(x, x, w3, "multi_axis")
    w = random_weights(RNG, 6, 2)
    with pytest.raises(AttentionError):
        blocked_attention(x, Tensor(RNG.standard_normal((1, 4, 2, 6))), w)
    with pytest.raises(AttentionError):
        blocked_attention(x, x, w, "interleaved")  # a stage-level mode
    with pytest.raises(AttentionError):
        blocked_attention(x, x, random_weights(RNG, 4, 2))


@pytest.mark.parametrize("axis", [1, 2])
def test_permutation_equivariance(axis):
    x = RNG.standard_normal((2, 5, 6, 4))
    w = random_weights(RNG, 4, 4)
    perm = RNG.permutation(x.shape[axis])
    out = blocked_attention(Tensor(x), Tensor(x), w).data
    xp = np.take(x, perm, axis=axis)
    np.testing.assert_allclose(blocked_attention(Tensor(xp), Tensor(xp), w).data, np.take(out, perm, axis=axis),
                               rtol=0, atol=1e-13)


# -- full, axial and cross attention ----------------------------------------------------------

def test_full_attention_single_position():
    x = RNG.standard_normal((3, 1, 5))
    w = random_weights(RNG, 5, 2)
    np.testing.assert_allclose(full_attention_oracle(Tensor(x), w).data, own_value(x, w), rtol=1e-14, atol=1e-15)


def test_full_attention_identical_positions_identical_outputs():
    row = RNG.standard_normal(4)
    x = np.stack([row, RNG.standard_normal(4), row])[None]
    out = full_attention_oracle(Tensor(x), random_weights(RNG, 4, 2)).data
    assert np.array_equal(out[0, 0], out[0, 2])


def test_full_attention_agrees_with_single_patch_regional():
    x = RNG.standard_normal((1, 16, 6))
    w = random_weights(RNG, 6, 2)
    got = blocked_attention(Tensor(x[:, None]), Tensor(x[:, None]), w, "regional_only").data[:, 0]
    np.testing.assert_allclose(got, full_attention_oracle(Tensor(x), w).data, rtol=0, atol=1e-12)


def test_axial_single_row_is_full_attention_for_row_heads():
    x = RNG.standard_normal((1, 1, 7, 4))
    w = random_weights(RNG, 4, 2)
    got = axial_attention(Tensor(x), w).data
    cols = own_value(x, heads_slice(w, 0, 1))
    rows = full_attention_oracle(Tensor(x[:, 0]), heads_slice(w, 1, 2)).data[:, None]
    np.testing.assert_allclose(got, cols + rows, rtol=0, atol=1e-13)


def test_axial_constant_input_constant_output():
    out = axial_attention(Tensor(np.full((1, 3, 5, 4), 0.7)), random_weights(RNG, 4, 4)).data
    np.testing.assert_allclose(out, np.broadcast_to(out[0, 0, 0], out.shape), rtol=0, atol=1e-15)


def test_axial_matches_row_column_oracle():
    x = RNG.standard_normal((1, 4, 4, 4))
    w = random_weights(RNG, 4, 2)
    want = masked(x, x, w, oracles.blocked_masks(4, 4, 2, "axial"))
    np.testing.assert_allclose(axial_attention(Tensor(x), w).data, want, rtol=0, atol=1e-12)
    with pytest.raises(AttentionError):
        axial_attention(Tensor(x), random_weights(RNG, 4, 1))


def test_cross_attention_identical_keys_average_values():
    b, N, L, d, c = 2, 5, 64, 8, 6
    w = random_weights(RNG, d, 4, kv_dim=c)
    x = RNG.standard_normal((b, N, d))
    row = RNG.standard_normal(c)
    z = np.broadcast_to(row, (b, L, c)).copy()
    out = cross_attention_mqa(Tensor(x), Tensor(z), Tensor(np.zeros((L, c))), w).data
    want = own_value(row, w)
    np.testing.assert_allclose(out, np.broadcast_to(want, out.shape), rtol=1e-13, atol=1e-14)


def test_cross_attention_single_latent_position():
    w = random_weights(RNG, 8, 2, kv_dim=3)
    x = RNG.standard_normal((1, 6, 8))
    z, pz = RNG.standard_normal((1, 1, 3)), RNG.standard_normal((1, 3))
    out = cross_attention_mqa(Tensor(x), Tensor(z), Tensor(pz), w).data
    np.testing.assert_allclose(out, np.broadcast_to(own_value((z + pz)[0, 0], w), out.shape), rtol=1e-13)


def test_cross_attention_matches_loop_oracle():
    b, N, L, d, c, h = 2, 6, 64, 8, 5, 4
    w = random_weights(RNG, d, h, kv_dim=c)
    x, z, pz = RNG.standard_normal((b, N, d)), RNG.standard_normal((b, L, c)), RNG.standard_normal((L, c))
    got = cross_attention_mqa(Tensor(x), Tensor(z), Tensor(pz), w).data
    kv = z + pz
    want = np.zeros_like(got)
    for bi, hi, i in itertools.product(range(b), range(h), range(N)):
        q = x[bi, i] @ w.w_q.data[hi] / math.sqrt(w.key_dim)
        logits = np.array([q @ (kv[bi, j] @ w.w_k.data) for j in range(L)])
        s = np.exp(logits - logits.max())
        s /= s.sum()
        want[bi, i] += w.w_o.data[hi] @ sum(s[j] * (kv[bi, j] @ w.w_v.data) for j in range(L))
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_cross_attention_shape_errors():
    w = random_weights(RNG, 8, 2, kv_dim=3)
    x = Tensor(RNG.standard_normal((1, 6, 8)))
    with pytest.raises(AttentionError):
        cross_attention_mqa(x, Tensor(np.ones((1, 4, 3))), Tensor(np.ones((5, 3))), w)
    with pytest.raises(AttentionError):
        cross_attention_mqa(x, Tensor(np.ones((1, 4, 2))), Tensor(np.ones((4, 2))), w)


@pytest.mark.parametrize("h,N,d", [(1, 5, 4), (2, 8, 8), (4, 16, 8), (2, 3, 6)])
def test_tied_multi_head_equals_multi_query_bit_exact(h, N, d):
    rng = np.random.default_rng(h * 100 + N)
    w = random_weights(rng, d, h)
    assert w.key_dim >= 2
    x = Tensor(rng.standard_normal((2, N, d)))
    tied_k = Tensor(np.broadcast_to(w.w_k.data, (h,) + w.w_k.shape).copy())
    tied_v = Tensor(np.broadcast_to(w.w_v.data, (h,) + w.w_v.shape).copy())
    assert np.array_equal(multi_head_attention(x, w.w_q, tied_k, tied_v, w.w_o).data, full_attention_oracle(x, w).data)


def test_tied_multi_head_equals_multi_query_unit_key_dim():
    # with k=1 the two paths hit different matmul kernels; agreement is to rounding, not bits
    w = random_weights(RNG, 7, 4, k=1)
    x = Tensor(RNG.standard_normal((2, 13, 7)))
    tied_k = Tensor(np.broadcast_to(w.w_k.data, (4,) + w.w_k.shape).copy())
    tied_v = Tensor(np.broadcast_to(w.w_v.data, (4,) + w.w_v.shape).copy())
    np.testing.assert_allclose(multi_head_attention(x, w.w_q, tied_k, tied_v, w.w_o).data,
                               full_attention_oracle(x, w).data, rtol=0, atol=1e-14)


# -- residual block ---------------------------------------------------------------------------

def _norms(d, n=2):
    return [NormParams(Tensor(np.ones(d)), Tensor(np.zeros(d)), NormState(d).populate()) for _ in range(n)]


def test_attention_block_zero_weights_is_identity():
    x = RNG.standard_normal((1, 4, 4, 4))
    zero = AttentionWeights(*(Tensor(np.zeros(s)) for s in ((2, 4, 2), (4, 2), (4, 2), (2, 4, 2))))
    mlp = MlpWeights(*(Tensor(np.zeros(s)) for s in ((4, 16), (16,), (16, 4), (4,))))
    n1, n2 = _norms(4)
    out = attention_block(Tensor(x), lambda t: blocked_attention(t, t, zero), "batch", n1, n2, mlp, "eval")
    assert np.array_equal(out.data, x)


def test_attention_block_zero_input_zero_output():
    w = random_weights(RNG, 4, 2)
    mlp = MlpWeights(Tensor(RNG.standard_normal((4, 16))), Tensor(np.zeros(16)), Tensor(RNG.standard_normal((16, 4))),
                     Tensor(np.zeros(4)))
    n1, n2 = _norms(4)
    out = attention_block(Tensor(np.zeros((1, 4, 4, 4))), lambda t: blocked_attention(t, t, w), "layer", n1, n2, mlp)
    assert np.array_equal(out.data, np.zeros((1, 4, 4, 4)))


def test_attention_block_rejects_shape_change():
    n1, = _norms(4, 1)
    with pytest.raises(AttentionError):
        attention_block(Tensor(np.ones((1, 2, 2, 4))), lambda t: ops.reshape(t, (1, 4, 1, 4)), "layer", n1)


@pytest.mark.parametrize("mode", ["multi_axis", "regional_only", "dilated_only", "full", "axial"])
def test_attention_block_gradcheck(mode):
    rng = np.random.default_rng(41)
    x = Tensor(rng.standard_normal((2, 2, 4, 4)), requires_grad=True)
    w = random_weights(rng, 4, 2)
    n1, n2 = (NormParams(Tensor(rng.standard_normal(4) + 1), Tensor(rng.standard_normal(4)), NormState(4).populate())
              for _ in range(2))
    mlp = MlpWeights(*(Tensor(rng.standard_normal(s)) for s in ((4, 8), (8,), (8, 4), (4,))))
    probe = rng.standard_normal(x.shape)
    params = [x, w.w_q, w.w_k, w.w_v, w.w_o, n1.scale, n1.shift, mlp.w1, mlp.w2]

    def f():
        return ops.sum(attention_block(x, lambda t: blocked_attention(t, t, w, mode), "layer", n1, n2, mlp) * probe)
    assert finite_diff_check(f, params).max_rel_error <= 1e-6


def test_interleaved_pair_gradcheck():
    rng = np.random.default_rng(42)
    x = Tensor(rng.standard_normal((1, 3, 4, 4)), requires_grad=True)
    w1, w2 = random_weights(rng, 4, 2), random_weights(rng, 4, 2)

    def f():
        y = blocked_attention(x, x, w1, "regional_only")
        return ops.sum(ops.square(blocked_attention(y, y, w2, "dilated_only")))
    assert finite_diff_check(f, [x, w1.w_q, w2.w_k]).max_rel_error <= 1e-6


# -- sizing -------------------------------------------------------------------------------------

@pytest.mark.parametrize("h,w,p", [(64, 64, 8), (8, 8, 2), (16, 16, 4), (4, 4, 2), (2, 2, 1), (32, 32, 4),
                                   (16, 64, 4), (8, 32, 4)])
def test_balance_patch_size(h, w, p):
    assert balance_patch_size(h, w) == p


def test_flop_count_large_balanced():
    assert flop_count("full", 1, 64, 64, h=2) == 33_554_432
    assert flop_count("multi_axis", 1, 64, 64, h=2) == 524_288
    assert flop_count("full", 1, 64, 64, h=2) // flop_count("multi_axis", 1, 64, 64, h=2) == 64


def test_flop_count_single_patch():
    for n, h, b in ((5, 2, 1), (16, 4, 3)):
        assert flop_count("multi_axis", b, 1, n, h=h) == (h // 2) * (n + n * n) * b


def test_flop_count_small_balanced_instrumented():
    x = Tensor(RNG.standard_normal((1, 4, 4, 4)))
    w = random_weights(RNG, 4, 2)
    counts = {}
    for mode in ("full", "multi_axis"):
        with count_logits() as tally:
            blocked_attention(x, x, w, mode)
        counts[mode] = tally[0]
    assert counts == {"full": 512, "multi_axis": 128}
    assert counts["full"] == flop_count("full", 1, 4, 4, h=2)
    assert counts["multi_axis"] == flop_count("multi_axis", 1, 4, 4, h=2)


@pytest.mark.parametrize("s", [2, 4, 8, 16, 32, 64])
@pytest.mark.parametrize("h,b", [(2, 1), (4, 3)])
def test_flop_count_n_to_three_halves(s, h, b):
    N = s * s
    assert flop_count("multi_axis", b, s, s, h=h) == math.isqrt(N ** 3) * b * h // 2 * 2
    assert flop_count("full", b, s, s, h=h) == flop_count("multi_axis", b, s, s, h=h) * s


def test_flop_count_rejects_unknown_mode():
    with pytest.raises(AttentionError):
        flop_count("sparse", 1, 2, 2)


def test_softmax_shift_invariance_inside_kernel():
    logits = RNG.standard_normal((2, 3, 5))
    a = ops.softmax(Tensor(logits)).data
    b = ops.softmax(Tensor(logits + 123.25)).data
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_contract_used_by_kernel_scales_logits():
    # one head, one key: output is the value projection whatever the scale, so probe the logits directly
    x = Tensor(np.ones((1, 1, 2, 4)))
    w = random_weights(RNG, 4, 2, k=4)
    with count_logits() as tally:
        blocked_attention(x, x, w)
    assert tally[0] == flop_count("multi_axis", 1, 1, 2, h=2)
    q = contract("bmnd,hdk->bhmnk", x, w.w_q).data / 2.0
    assert q.shape == (1, 2, 1, 2, 4)
