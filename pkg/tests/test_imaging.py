import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from scenerecovery.errors import DomainError, EmptyInput, FormatError
from scenerecovery.imaging import (
    clamp01,
    load_depth,
    load_image,
    percentile,
    save_depth,
    save_image,
)


class TestLoadImage:
    def test_white_png_maps_to_ones(self, tmp_path):
        path = tmp_path / "white.png"
        Image.fromarray(np.full((2, 2, 3), 255, dtype=np.uint8)).save(path)
        img = load_image(path)
        assert img.shape == (2, 2, 3)
        np.testing.assert_array_equal(img, 1.0)

    def test_eight_bit_normalization(self, tmp_path):
        path = tmp_path / "mid.png"
        Image.fromarray(np.full((1, 1, 3), 128, dtype=np.uint8)).save(path)
        img = load_image(path)
        np.testing.assert_allclose(img, 128 / 255, atol=1e-7)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    def test_non_rgb_rejected(self, tmp_path):
        path = tmp_path / "gray.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(path)
        with pytest.raises(FormatError):
            load_image(path)

    def test_undecodable_rejected(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"this is not a png")
        with pytest.raises(FormatError):
            load_image(path)


class TestSaveImage:
    def test_clamp_above_one(self, tmp_path):
        path = tmp_path / "hot.png"
        save_image(np.full((1, 1, 3), 1.2), path)
        assert np.asarray(Image.open(path))[0, 0, 0] == 255

    def test_round_half_up(self, tmp_path):
        path = tmp_path / "half.png"
        save_image(np.full((1, 1, 3), 0.5), path)
        # 0.5 * 255 = 127.5 rounds up
        assert np.asarray(Image.open(path))[0, 0, 0] == 128

    def test_round_trip_within_quantum(self, tmp_path, random_image):
        img = random_image(16, 16)
        path = tmp_path / "rt.png"
        save_image(img, path)
        back = load_image(path)
        assert np.max(np.abs(back - clamp01(img))) < 1 / 255

    def test_unwritable_path(self, tmp_path, random_image):
        with pytest.raises(OSError):
            save_image(random_image(4, 4), tmp_path / "no" / "dir" / "x.png")


class TestDepthIO:
    def test_sixteen_bit_round_trip(self, tmp_path, rng):
        depth = rng.uniform(0, 1, size=(9, 7)).astype(np.float32)
        path = tmp_path / "d.png"
        save_depth(depth, path)
        back = load_depth(path)
        assert back.shape == depth.shape
        assert np.max(np.abs(back - depth)) < 1 / 65535


class TestPercentile:
    def test_endpoints(self):
        vals = np.array([0.1, 0.5, 0.9])
        assert percentile(vals, 0.0) == 0.1
        assert percentile(vals, 1.0) == 0.9

    def test_ramp_rank(self):
        ramp = np.linspace(0.0, 1.0, 101)
        assert percentile(ramp, 0.01) == pytest.approx(0.01, abs=1e-12)

    def test_matches_sort_oracle(self, rng):
        for _ in range(50):
            vals = rng.uniform(-5, 5, size=int(rng.integers(1, 200)))
            p = float(rng.uniform(0, 1))
            ordered = sorted(vals.tolist())
            rank = max(math.ceil(p * len(ordered) - 1e-9), 1)
            assert percentile(vals, p) == ordered[rank - 1]

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            percentile(np.array([]), 0.5)

    def test_bad_fraction_rejected(self):
        with pytest.raises(DomainError):
            percentile(np.array([1.0]), 1.5)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(
            st.floats(-10, 10, allow_nan=False, width=32), min_size=1, max_size=60
        ),
        st.floats(0, 1),
        st.floats(0, 1),
    )
    def test_monotone_in_fraction(self, vals, p1, p2):
        lo, hi = sorted((p1, p2))
        arr = np.asarray(vals)
        assert percentile(arr, lo) <= percentile(arr, hi)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(
            st.floats(-10, 10, allow_nan=False, width=32), min_size=1, max_size=60
        ),
        st.floats(0, 1),
    )
    def test_returns_an_element(self, vals, p):
        arr = np.asarray(vals)
        assert percentile(arr, p) in arr


class TestClamp:
    @pytest.mark.parametrize("value,expected", [(-0.3, 0.0), (0.4, 0.4), (7.0, 1.0)])
    def test_pointwise(self, value, expected):
        assert clamp01(np.array([value]))[0] == expected
