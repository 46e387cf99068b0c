import math

import numpy as np
import pytest

from scenerecovery.degrade import (
    AtmoLightSet,
    DegradationSpec,
    default_atmo_set,
    load_atmo_set,
    sample_atmo_light,
    sample_spec,
    save_atmo_set,
    synth_lowlight,
    synth_pair,
    synth_scatter,
)
from scenerecovery.errors import (
    DomainError,
    EmptySet,
    MissingDepth,
    NegativeDepth,
    ShapeMismatch,
)
from scenerecovery.toydata import synthetic_scene

GRAY = (0.8, 0.8, 0.8)


class TestScatterModel:
    def test_zero_depth_is_identity(self, random_image):
        clean = random_image(8, 8)
        out = synth_scatter(clean, np.zeros((8, 8)), beta=1.7, atmo_light=GRAY)
        np.testing.assert_allclose(out, clean, atol=1e-12)

    def test_full_scattering_limit(self, random_image):
        clean = random_image(8, 8)
        out = synth_scatter(clean, np.ones((8, 8)), beta=80.0, atmo_light=GRAY)
        np.testing.assert_allclose(out, 0.8, atol=1e-9)

    def test_half_transmission_value(self):
        clean = np.full((2, 2, 3), 0.5)
        depth = np.full((2, 2), math.log(2.0))
        out = synth_scatter(clean, depth, beta=1.0, atmo_light=GRAY)
        np.testing.assert_allclose(out, 0.5 * 0.5 + 0.8 * 0.5, atol=1e-12)

    def test_shape_mismatch(self, random_image):
        with pytest.raises(ShapeMismatch):
            synth_scatter(random_image(8, 8), np.zeros((4, 4)), 1.0, GRAY)

    def test_negative_depth(self, random_image):
        with pytest.raises(NegativeDepth):
            synth_scatter(random_image(4, 4), -np.ones((4, 4)), 1.0, GRAY)

    def test_algebraic_inversion(self, rng, random_image):
        clean = random_image(16, 16)
        depth = rng.uniform(0, 1, size=(16, 16))
        beta = 2.0
        out = synth_scatter(clean, depth, beta, GRAY)
        t = np.exp(-beta * depth)[:, :, None]
        a = np.asarray(GRAY).reshape(1, 1, 3)
        mask = np.broadcast_to(t > 1e-3, out.shape)
        recovered = (out - a * (1 - t)) / t
        assert np.max(np.abs(recovered[mask] - clean[mask])) < 1e-6

    def test_monotone_toward_airlight(self, rng, random_image):
        clean = random_image(8, 8)
        depth = rng.uniform(0, 1, size=(8, 8))
        a = np.asarray(GRAY).reshape(1, 1, 3)
        prev = np.abs(synth_scatter(clean, depth, 0.5, GRAY) - a)
        for beta in (1.0, 2.0, 4.0, 8.0):
            cur = np.abs(synth_scatter(clean, depth, beta, GRAY) - a)
            assert np.all(cur <= prev + 1e-12)
            prev = cur

    def test_output_in_unit_range(self, rng, random_image):
        clean = random_image(8, 8)
        depth = rng.uniform(0, 3, size=(8, 8))
        out = synth_scatter(clean, depth, 1.3, GRAY)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestLowlight:
    def test_exponent_zero_is_identity(self, random_image):
        clean = random_image(8, 8)
        out = synth_lowlight(clean, dark_gamma=1.0, illum_scale=1.0)
        np.testing.assert_allclose(out, clean, atol=1e-12)

    def test_uniform_illumination_quarter(self):
        clean = np.ones((16, 16, 3))
        out = synth_lowlight(clean, dark_gamma=2.0, illum_scale=0.25)
        np.testing.assert_allclose(out, 0.25, atol=1e-9)

    def test_attenuation_only(self, random_image):
        clean = random_image(16, 16)
        out = synth_lowlight(clean, dark_gamma=2.5, illum_scale=0.5)
        assert np.all(out <= clean + 1e-12)
        assert out.mean() <= clean.mean()

    def test_parameter_validation(self, random_image):
        with pytest.raises(DomainError):
            synth_lowlight(random_image(4, 4), dark_gamma=0.5, illum_scale=0.5)
        with pytest.raises(DomainError):
            synth_lowlight(random_image(4, 4), dark_gamma=2.0, illum_scale=0.0)


class TestAtmoSets:
    def test_singleton(self):
        s = AtmoLightSet("one", ((0.9, 0.9, 0.9),))
        assert sample_atmo_light(s, 7) == (0.9, 0.9, 0.9)

    def test_seed_determinism(self):
        s = default_atmo_set("haze")
        assert sample_atmo_light(s, 42) == sample_atmo_light(s, 42)

    def test_near_uniform_over_seeds(self):
        entries = tuple((float(v), float(v), float(v)) for v in np.linspace(0.7, 1, 5))
        s = AtmoLightSet("five", entries)
        counts = dict.fromkeys(entries, 0)
        for seed in range(10000):
            counts[sample_atmo_light(s, seed)] += 1
        n, p = 10000, 1 / 5
        sigma = math.sqrt(n * p * (1 - p))
        for c in counts.values():
            assert abs(c - n * p) <= 3 * sigma

    def test_empty_set_rejected(self):
        with pytest.raises(EmptySet):
            AtmoLightSet("none", ())

    def test_text_round_trip(self, tmp_path):
        s = default_atmo_set("sand")
        path = tmp_path / "sand.txt"
        save_atmo_set(s, path)
        back = load_atmo_set(path)
        assert len(back.entries) == len(s.entries)
        np.testing.assert_allclose(back.entries, s.entries, atol=1e-6)

    def test_defaults_satisfy_kind_constraints(self):
        default_atmo_set("haze").validate_for("haze")
        default_atmo_set("sand").validate_for("sand")


class TestSpecValidation:
    def test_haze_must_be_achromatic(self):
        with pytest.raises(DomainError):
            DegradationSpec(kind="haze", beta=1.0, atmo_light=(0.9, 0.7, 0.5))

    def test_sand_channel_ordering(self):
        with pytest.raises(DomainError):
            DegradationSpec(kind="sand", beta=1.0, atmo_light=(0.5, 0.7, 0.9))
        DegradationSpec(kind="sand", beta=1.0, atmo_light=(0.9, 0.75, 0.5))

    def test_dark_gamma_above_one(self):
        with pytest.raises(DomainError):
            DegradationSpec(kind="lowlight", dark_gamma=1.0, illum_scale=0.5)

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            DegradationSpec(kind="rain")


class TestSynthPair:
    def test_lowlight_needs_no_depth(self, random_image):
        degraded, clean = synth_pair(
            random_image(16, 16), None, DegradationSpec(kind="lowlight"), seed=0
        )
        assert degraded.shape == clean.shape

    def test_haze_without_depth_rejected(self, random_image):
        with pytest.raises(MissingDepth):
            synth_pair(random_image(8, 8), None, DegradationSpec(kind="haze"), seed=0)

    def test_sand_shifts_red_over_blue(self):
        clean, depth = synthetic_scene(5, size=(48, 48))
        degraded, _ = synth_pair(clean, depth, DegradationSpec(kind="sand"), seed=11)
        assert degraded[:, :, 0].mean() > degraded[:, :, 2].mean()

    def test_deterministic_per_seed(self, random_image, rng):
        clean = random_image(16, 16)
        depth = rng.uniform(0, 1, size=(16, 16))
        a, _ = synth_pair(clean, depth, DegradationSpec(kind="haze"), seed=9)
        b, _ = synth_pair(clean, depth, DegradationSpec(kind="haze"), seed=9)
        np.testing.assert_array_equal(a, b)

    def test_outputs_in_unit_range(self, rng):
        clean, depth = synthetic_scene(7, size=(32, 32))
        for kind in ("haze", "sand", "lowlight"):
            degraded, _ = synth_pair(clean, depth, DegradationSpec(kind=kind), seed=3)
            assert degraded.min() >= 0.0 and degraded.max() <= 1.0


class TestSampleSpec:
    def test_concrete_and_deterministic(self):
        a = sample_spec("haze", 123)
        b = sample_spec("haze", 123)
        assert a == b
        assert a.beta is not None and a.atmo_light is not None

    def test_lowlight_fields(self):
        s = sample_spec("lowlight", 5)
        assert s.dark_gamma > 1.0
        assert 0.0 < s.illum_scale <= 1.0
