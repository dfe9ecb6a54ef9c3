import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitgen import oracles
from hitgen.blocking import (BlockedTensor, BlockingError, block, depth_to_space, grid_shape, nearest_upsample,
                             pixel_shuffle, space_to_depth, unblock)
from hitgen.numerics import Tensor, finite_diff_check, ops

RNG = np.random.default_rng(3)
A, B, C, D = 1.0, 2.0, 3.0, 4.0


def t(x):
    return Tensor(np.asarray(x, dtype=np.float64))


def test_space_to_depth_p1_identity():
    x = RNG.standard_normal((2, 3, 5, 4))
    assert np.array_equal(space_to_depth(t(x), 1).data, x)


def test_space_to_depth_2x2_order():
    x = np.array([[A, B], [C, D]]).reshape(1, 2, 2, 1)
    assert np.array_equal(space_to_depth(t(x), 2).data.ravel(), [A, B, C, D])


def test_space_to_depth_index_map():
    x = np.arange(32, dtype=np.float64).reshape(1, 4, 4, 2)
    assert np.array_equal(space_to_depth(t(x), 2).data, oracles.space_to_depth_map(x, 2))


def test_space_to_depth_divisibility():
    with pytest.raises(BlockingError):
        space_to_depth(t(np.ones((1, 4, 6, 1))), 4)


def test_depth_to_space_p1_and_inverse():
    x = RNG.standard_normal((1, 4, 4, 3))
    assert np.array_equal(depth_to_space(t(x), 1).data, x)
    for p in (2, 4):
        assert np.array_equal(depth_to_space(space_to_depth(t(x), p), p).data, x)


def test_depth_to_space_4_channels():
    out = depth_to_space(t(np.array([A, B, C, D]).reshape(1, 1, 1, 4)), 2).data
    assert np.array_equal(out[0, :, :, 0], [[A, B], [C, D]])


def test_depth_to_space_channel_divisibility():
    with pytest.raises(BlockingError):
        depth_to_space(t(np.ones((1, 2, 2, 6))), 2)


def test_block_p1_is_pixel_enumeration():
    x = RNG.standard_normal((2, 3, 4, 5))
    y = block(t(x), 1)
    assert y.data.shape == (2, 12, 1, 5)
    assert np.array_equal(y.data.data[:, :, 0], x.reshape(2, 12, 5))


def test_block_4x4_into_2x2_patches():
    y = block(t(RNG.standard_normal((1, 4, 4, 7))), 2)
    assert y.data.shape == (1, 4, 4, 7)
    assert (y.patch_size, y.height, y.width, y.aspect_ratio) == (2, 4, 4, 1.0)


def test_block_first_patch_pixels():
    x = np.arange(16, dtype=np.float64).reshape(1, 4, 4, 1)
    y = block(t(x), 2).data.data
    assert np.array_equal(y[0, 0, :, 0], [x[0, 0, 0, 0], x[0, 0, 1, 0], x[0, 1, 0, 0], x[0, 1, 1, 0]])
    assert np.array_equal(y, oracles.block_map(x, 2))


def test_block_divisibility():
    with pytest.raises(BlockingError):
        block(t(np.ones((1, 6, 8, 1))), 4)


def test_unblock_square():
    x = RNG.standard_normal((3, 8, 8, 2))
    assert np.array_equal(unblock(block(t(x), 4), 1.0).data, x)


def test_grid_from_aspect_ratio():
    gh, gw, p = grid_shape(4, 4, 1.0)
    assert (gh * p, gw * p) == (4, 4)
    gh, gw, p = grid_shape(8, 4, 2.0)
    assert (gh * p, gw * p) == (4, 8)


def test_unblock_wide_feature_round_trip():
    x = RNG.standard_normal((1, 4, 8, 3))
    y = block(t(x), 2)
    assert y.data.shape == (1, 8, 4, 3)
    raw = y.data  # raw tensor plus an explicit aspect ratio
    assert np.array_equal(unblock(raw, 2.0).data, x)
    assert np.array_equal(oracles.block_map(x, 2), raw.data)


def test_unblock_errors():
    with pytest.raises(BlockingError):
        unblock(t(np.ones((1, 4, 3, 1))), 1.0)  # n not a perfect square
    with pytest.raises(BlockingError):
        unblock(t(np.ones((1, 3, 4, 1))), 1.0)  # 3 patches do not tile a square
    with pytest.raises(BlockingError):
        unblock(t(np.ones((1, 8, 4, 1))), 3.0)  # no integer grid at this aspect ratio


def test_blocked_tensor_invariants():
    with pytest.raises(BlockingError):
        BlockedTensor(t(np.ones((1, 4, 4, 1))), 2, 4, 6)
    with pytest.raises(BlockingError):
        BlockedTensor(t(np.ones((1, 4, 4, 1))), 4, 8, 8)


def test_pixel_shuffle():
    out = pixel_shuffle(t(np.array([A, B, C, D]).reshape(1, 1, 1, 4))).data
    assert np.array_equal(out[0, :, :, 0], [[A, B], [C, D]])
    const = pixel_shuffle(t(np.full((2, 3, 3, 8), 0.25))).data
    assert const.shape == (2, 6, 6, 2) and np.all(const == 0.25)
    x = RNG.standard_normal((1, 2, 2, 8))
    want = np.empty((1, 4, 4, 2))
    for i, j, di, dj, c in np.ndindex(2, 2, 2, 2, 2):
        want[0, 2 * i + di, 2 * j + dj, c] = x[0, i, j, (di * 2 + dj) * 2 + c]
    assert np.array_equal(pixel_shuffle(t(x)).data, want)
    with pytest.raises(BlockingError):
        pixel_shuffle(t(np.ones((1, 2, 2, 6))))


def test_nearest_upsample():
    out = nearest_upsample(t(np.full((1, 1, 1, 1), 2.5))).data
    assert np.array_equal(out, np.full((1, 2, 2, 1), 2.5))
    x = RNG.standard_normal((1, 3, 3, 2))
    y = nearest_upsample(t(x)).data
    assert np.array_equal(y, oracles.nearest_upsample_map(x))
    assert np.isclose(y.sum(), 4 * x.sum(), rtol=1e-14)


@pytest.mark.parametrize("p", [1, 2, 4, 8])
def test_round_trips_exhaustive(p):
    for h in range(p, 33, p):
        for w in range(p, 33, p):
            x = RNG.standard_normal((1, h, w, 2))
            assert np.array_equal(unblock(block(t(x), p)).data, x), (p, h, w)
            assert np.array_equal(depth_to_space(space_to_depth(t(x), p), p).data, x), (p, h, w)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([1, 2, 4]), st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
def test_block_preserves_multiset(p, gh, gw, d):
    x = RNG.standard_normal((2, gh * p, gw * p, d))
    y = block(t(x), p).data.data
    assert np.array_equal(np.sort(y, axis=None), np.sort(x, axis=None))


def test_pixel_shuffle_inverse():
    x = RNG.standard_normal((2, 3, 5, 12))
    assert np.array_equal(space_to_depth(pixel_shuffle(t(x)), 2).data, x)


def test_layout_ops_gradcheck():
    x = Tensor(RNG.standard_normal((1, 4, 8, 4)), requires_grad=True)
    probes = [RNG.standard_normal(s) for s in ((1, 8, 4, 4), (1, 2, 4, 16), (1, 8, 16, 1), (1, 8, 16, 4),
                                                (1, 4, 8, 4))]

    def f():
        out = ops.sum(block(x, 2).data * probes[0]) + ops.sum(space_to_depth(x, 2) * probes[1])
        out = out + ops.sum(pixel_shuffle(x) * probes[2]) + ops.sum(nearest_upsample(x) * probes[3])
        return out + ops.sum(unblock(block(x, 4)) * probes[4])
    assert finite_diff_check(f, [x]).max_rel_error <= 1e-8
