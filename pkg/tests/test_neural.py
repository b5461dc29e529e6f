import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from replaycm.neural import max_pool_2x2, mfm, mfm_backward


def loop_mfm(x):
    k = x.shape[0] // 2
    out = np.empty((k,) + x.shape[1:])
    for c in range(k):
        for i in range(x.shape[1]):
            for j in range(x.shape[2]):
                out[c, i, j] = max(x[c, i, j], x[c + k, i, j])
    return out


def loop_max_pool(x):
    c, h, w = x.shape
    out = np.empty((c, h // 2, w // 2))
    for ch in range(c):
        for i in range(h // 2):
            for j in range(w // 2):
                out[ch, i, j] = max(
                    x[ch, 2 * i, 2 * j], x[ch, 2 * i, 2 * j + 1],
                    x[ch, 2 * i + 1, 2 * j], x[ch, 2 * i + 1, 2 * j + 1],
                )
    return out


class TestMfm:
    def test_identical_halves(self, rng):
        half = rng.standard_normal((3, 4, 5))
        x = np.concatenate([half, half])
        assert np.array_equal(mfm(x), half)

    def test_small_example(self):
        x = np.array([[[1.0, 2.0]], [[3.0, 0.0]]])
        assert np.array_equal(mfm(x), np.array([[[3.0, 2.0]]]))

    def test_matches_nested_loop_oracle(self, rng):
        x = rng.standard_normal((8, 5, 7))
        assert np.array_equal(mfm(x), loop_mfm(x))

    def test_odd_channels_rejected(self, rng):
        with pytest.raises(ValueError, match="even"):
            mfm(rng.standard_normal((3, 2, 2)))

    def test_output_dominates_both_halves(self, rng):
        x = rng.standard_normal((6, 4, 4))
        out = mfm(x)
        k = 3
        assert np.all(out >= x[:k]) and np.all(out >= x[k:])
        assert np.all((out == x[:k]) | (out == x[k:]))

    @settings(max_examples=25, deadline=None)
    @given(alpha=st.floats(min_value=0.0, max_value=10.0, allow_nan=False))
    def test_positive_homogeneity(self, alpha):
        x = np.random.default_rng(8).standard_normal((4, 3, 3))
        assert np.array_equal(mfm(alpha * x), alpha * mfm(x))


class TestMfmBackward:
    def test_first_half_strictly_larger(self, rng):
        k = 2
        x = np.concatenate([np.ones((k, 3, 3)), np.zeros((k, 3, 3))])
        upstream = rng.standard_normal((k, 3, 3))
        grad = mfm_backward(x, upstream)
        assert np.array_equal(grad[:k], upstream)
        assert np.all(grad[k:] == 0.0)

    def test_matches_central_finite_differences(self, rng):
        x = rng.standard_normal((4, 3, 4))
        upstream = rng.standard_normal((2, 3, 4))
        grad = mfm_backward(x, upstream)
        h = 1e-5
        numeric = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            plus = x.copy()
            plus[idx] += h
            minus = x.copy()
            minus[idx] -= h
            numeric[idx] = np.sum((mfm(plus) - mfm(minus)) * upstream) / (2 * h)
        gaps = np.abs(x[:2] - x[2:])
        non_tied = np.concatenate([gaps, gaps]) > 10 * h
        err = np.abs(grad - numeric)[non_tied]
        scale = np.maximum(np.abs(numeric)[non_tied], 1.0)
        assert np.max(err / scale) <= 1e-6

    def test_tie_routes_to_first_half(self):
        x = np.full((2, 1, 1), 0.5)
        upstream = np.array([[[2.0]]])
        grad = mfm_backward(x, upstream)
        assert grad[0, 0, 0] == 2.0
        assert grad[1, 0, 0] == 0.0

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError, match="upstream"):
            mfm_backward(rng.standard_normal((4, 2, 2)), rng.standard_normal((3, 2, 2)))


class TestMaxPool:
    def test_constant_tensor(self):
        x = np.full((2, 6, 8), 1.5)
        out = max_pool_2x2(x)
        assert out.shape == (2, 3, 4)
        assert np.all(out == 1.5)

    def test_single_window(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        assert np.array_equal(max_pool_2x2(x), np.array([[[4.0]]]))

    def test_matches_nested_loop_oracle(self, rng):
        x = rng.standard_normal((3, 8, 10))
        assert np.array_equal(max_pool_2x2(x), loop_max_pool(x))

    def test_odd_trailing_dropped(self, rng):
        x = rng.standard_normal((1, 5, 7))
        out = max_pool_2x2(x)
        assert out.shape == (1, 2, 3)
        assert np.array_equal(out, loop_max_pool(x[:, :4, :6]))

    def test_small_spatial_rejected(self, rng):
        with pytest.raises(ValueError, match="spatial"):
            max_pool_2x2(rng.standard_normal((1, 1, 5)))

    def test_each_output_is_max_of_its_four_sources(self, rng):
        x = rng.standard_normal((2, 6, 6))
        out = max_pool_2x2(x)
        for ch in range(2):
            for i in range(3):
                for j in range(3):
                    block = x[ch, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                    assert out[ch, i, j] == block.max()
