import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenerecovery.errors import BadWindow, DegenerateRange, DomainError
from scenerecovery.priors import (
    GammaBank,
    OLSParams,
    gamma_bank_apply,
    gamma_correct,
    linear_stretch,
    local_contrast,
    optimized_linear_stretch,
)


def brute_force_stretch(channel, params):
    """Independent oracle: sort, pick nearest ranks, substitute, clamp."""
    flat = sorted(float(v) for v in np.asarray(channel).ravel())
    n = len(flat)

    def rank_value(p):
        rank = max(math.ceil(p * n - 1e-9), 1)
        return flat[min(rank, n) - 1]

    t_min = rank_value(params.p_min)
    t_max = rank_value(params.p_max)
    width = t_max - t_min
    tp_min = t_min - params.p_a_min * width
    tp_max = t_max + params.p_a_max * width
    out = (np.asarray(channel, dtype=np.float64) - tp_min) / (tp_max - tp_min)
    return np.clip(out, 0.0, 1.0)


class TestGammaCorrect:
    def test_one_is_fixed_point(self):
        for g in (0.25, 0.5, 1.0, 2.0, 4.0):
            assert gamma_correct(np.array([1.0]), g)[0] == 1.0

    def test_square_root(self):
        assert gamma_correct(np.array([0.25]), 0.5)[0] == pytest.approx(0.5)

    def test_fourth_power(self):
        assert gamma_correct(np.array([0.5]), 4.0)[0] == pytest.approx(0.0625)

    def test_negative_input_rejected(self):
        with pytest.raises(DomainError):
            gamma_correct(np.array([-0.1]), 2.0)

    def test_nonpositive_gamma_rejected(self):
        with pytest.raises(DomainError):
            gamma_correct(np.array([0.5]), 0.0)

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(0.0, 1.0, allow_nan=False),
        st.floats(0.1, 4.0, allow_nan=False),
        st.floats(0.1, 4.0, allow_nan=False),
    )
    def test_exponent_composition(self, x, a, b):
        arr = np.array([x])
        lhs = gamma_correct(gamma_correct(arr, a), b)
        rhs = gamma_correct(arr, a * b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_monotone(self, rng):
        x = np.sort(rng.uniform(0, 1, size=64))
        y = gamma_correct(x, 0.37)
        assert np.all(np.diff(y) >= 0)


class TestGammaBank:
    def test_default_bank_is_four_exponents(self):
        assert GammaBank().gammas == (0.25, 0.5, 2.0, 4.0)
        outs = gamma_bank_apply(np.full((4, 4, 3), 0.3), GammaBank())
        assert len(outs) == 4

    def test_ones_map_to_ones(self):
        for out in gamma_bank_apply(np.ones((2, 2, 3)), GammaBank()):
            np.testing.assert_array_equal(out, 1.0)

    def test_power_law_ordering(self, random_image):
        img = random_image(8, 8)
        low, half, two, four = gamma_bank_apply(img, GammaBank())
        assert np.all(low >= img - 1e-12)
        assert np.all(half >= img - 1e-12)
        assert np.all(two <= img + 1e-12)
        assert np.all(four <= img + 1e-12)

    def test_invalid_bank_rejected(self):
        with pytest.raises(DomainError):
            GammaBank(gammas=(1.0, -2.0))


class TestLinearStretch:
    def test_direct_substitution(self):
        channel = np.array([[0.2, 0.45, 0.7]]).reshape(1, 3, 1)
        out = linear_stretch(channel)
        np.testing.assert_allclose(out.ravel(), [0.0, 0.5, 1.0], atol=1e-12)

    def test_full_span_is_identity(self):
        channel = np.array([[0.0, 0.25, 1.0]]).reshape(1, 3, 1)
        np.testing.assert_allclose(linear_stretch(channel), channel, atol=1e-12)

    def test_constant_channel_rejected(self):
        with pytest.raises(DegenerateRange):
            linear_stretch(np.full((3, 3, 3), 0.5))

    def test_output_spans_unit_interval(self, random_image):
        out = linear_stretch(random_image(16, 16))
        for c in range(3):
            assert out[:, :, c].min() == pytest.approx(0.0, abs=1e-12)
            assert out[:, :, c].max() == pytest.approx(1.0, abs=1e-12)


class TestOptimizedLinearStretch:
    def test_threshold_expansion_formula(self):
        # channel whose 0th/100th percentiles are 0.2 and 0.8
        channel = np.linspace(0.2, 0.8, 64).reshape(8, 8, 1)
        params = OLSParams(0.0, 1.0, 0.1, 0.1)
        out = optimized_linear_stretch(channel, params, clip=False)
        # thresholds (0.14, 0.86): check by inverting the affine map at two pixels
        np.testing.assert_allclose(
            out[0, 0, 0], (0.2 - 0.14) / (0.86 - 0.14), atol=1e-12
        )
        np.testing.assert_allclose(
            out[-1, -1, 0], (0.8 - 0.14) / (0.86 - 0.14), atol=1e-12
        )

    def test_degenerates_to_linear_stretch(self, rng):
        # percentiles at the actual extremes and zero adjustment
        channel = rng.uniform(0, 1, size=(32, 32, 1))
        channel.ravel()[0] = 0.0
        channel.ravel()[1] = 1.0
        params = OLSParams(0.0, 1.0, 0.0, 0.0)
        out = optimized_linear_stretch(channel, params)
        np.testing.assert_allclose(
            out, np.clip(linear_stretch(channel), 0, 1), atol=1e-12
        )

    def test_matches_brute_force(self, rng):
        params = OLSParams(0.01, 0.99, 0.05, 0.05)
        channel = rng.uniform(0, 1, size=(64, 64))
        out = optimized_linear_stretch(channel, params)
        np.testing.assert_allclose(out, brute_force_stretch(channel, params), atol=1e-6)

    def test_constant_channel_rejected(self):
        with pytest.raises(DegenerateRange):
            optimized_linear_stretch(np.full((4, 4, 3), 0.3), OLSParams())

    def test_affine_collinearity_before_clamp(self):
        channel = np.linspace(0.1, 0.9, 27).reshape(3, 3, 3)
        out = optimized_linear_stretch(channel, OLSParams(0.0, 1.0, 0.2, 0.3), clip=False)
        x = channel[:, :, 1].ravel()
        y = out[:, :, 1].ravel()
        # collinear: slope between any pair of points is constant
        slope = (y[1] - y[0]) / (x[1] - x[0])
        for i in range(2, len(x)):
            assert (y[i] - y[0]) == pytest.approx(slope * (x[i] - x[0]), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(
        st.floats(0.1, 5.0, allow_nan=False),
        st.floats(-2.0, 2.0, allow_nan=False),
        st.integers(0, 2**31 - 1),
    )
    def test_affine_input_invariance(self, a, b, seed):
        channel = np.random.default_rng(seed).uniform(0, 1, size=(16, 16))
        params = OLSParams(0.05, 0.95, 0.1, 0.2)
        base = optimized_linear_stretch(channel, params)
        re_encoded = optimized_linear_stretch(a * channel + b, params)
        np.testing.assert_allclose(re_encoded, base, atol=1e-6)

    def test_params_validation(self):
        with pytest.raises(DomainError):
            OLSParams(0.5, 0.5)
        with pytest.raises(DomainError):
            OLSParams(0.1, 0.9, -0.1, 0.0)


class TestLocalContrast:
    def test_constant_image_is_zero(self):
        out = local_contrast(np.full((8, 8, 3), 0.7), 3)
        np.testing.assert_array_equal(out, 0.0)

    def test_window_one_is_zero(self, random_image):
        out = local_contrast(random_image(8, 8), 1)
        np.testing.assert_array_equal(out, 0.0)

    def test_checkerboard_window_three(self):
        board = np.indices((8, 8)).sum(axis=0) % 2
        out = local_contrast(board.astype(np.float64), 3)
        np.testing.assert_array_equal(out, 1.0)

    def test_matches_exhaustive_scan(self, rng):
        img = rng.uniform(0, 1, size=(10, 11))
        window = 5
        half = window // 2
        padded = np.pad(img, half, mode="edge")
        expected = np.empty_like(img)
        for i in range(img.shape[0]):
            for j in range(img.shape[1]):
                patch = padded[i : i + window, j : j + window]
                expected[i, j] = patch.max() - patch.min()
        np.testing.assert_allclose(local_contrast(img, window), expected, atol=1e-12)

    def test_nonnegative_and_zero_iff_constant(self, rng):
        img = rng.uniform(0, 1, size=(12, 12))
        out = local_contrast(img, 3)
        assert np.all(out >= 0)
        assert np.all(out > 0)  # random image: no constant window

    def test_even_window_rejected(self, random_image):
        with pytest.raises(BadWindow):
            local_contrast(random_image(8, 8), 4)
