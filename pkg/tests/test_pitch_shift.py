"""Additive register matching for inference-time pitch adaptation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singsynth.pitch import PitchShiftConfig, shift_f0, shift_to_references
from singsynth.signal import NoVoicedFramesError, voiced_mean


def contour(voiced_values, unvoiced_at=()):
    f0 = np.array(voiced_values, dtype=np.float32)
    for i in unvoiced_at:
        f0[i] = 0.0
    return f0


class TestConfig:
    def test_lower_bound_positive(self):
        with pytest.raises(ValueError, match="positive"):
            PitchShiftConfig(f0_lower_bound=0.0)

    def test_frozen(self):
        cfg = PitchShiftConfig()
        with pytest.raises(AttributeError):
            cfg.enabled = False


class TestShiftF0:
    def test_mean_moves_to_target(self):
        src = contour([100.0, 110.0, 0.0, 120.0], unvoiced_at=(2,))
        out = shift_f0(src, 110.0, 240.0)
        assert voiced_mean(out) == pytest.approx(240.0, abs=1e-4)

    def test_unvoiced_frames_preserved_exactly(self):
        src = contour([0.0, 200.0, 0.0, 210.0, 0.0])
        out = shift_f0(src, 205.0, 300.0)
        np.testing.assert_array_equal(out == 0.0, src == 0.0)

    def test_melodic_shape_preserved(self):
        src = contour([100.0, 120.0, 140.0])
        out = shift_f0(src, 120.0, 320.0)
        np.testing.assert_allclose(np.diff(out), np.diff(src), atol=1e-4)

    def test_clamp_at_lower_bound(self):
        src = contour([100.0, 200.0])
        out = shift_f0(src, 150.0, 80.0, PitchShiftConfig(f0_lower_bound=65.0))
        np.testing.assert_allclose(out, [65.0, 130.0], atol=1e-4)

    def test_disabled_returns_copy(self):
        src = contour([100.0, 0.0, 120.0])
        out = shift_f0(src, 110.0, 500.0, PitchShiftConfig(enabled=False))
        np.testing.assert_array_equal(out, src)
        out[0] = -1.0
        assert src[0] == pytest.approx(100.0)

    def test_downward_shift(self):
        src = contour([400.0, 420.0])
        out = shift_f0(src, 410.0, 210.0)
        np.testing.assert_allclose(out, [200.0, 220.0], atol=1e-3)


class TestShiftToReferences:
    def test_pools_reference_frames(self):
        src = contour([100.0, 110.0])
        refs = [contour([200.0, 0.0]), contour([300.0, 250.0, 0.0])]
        out = shift_to_references(src, refs)
        assert voiced_mean(out) == pytest.approx(250.0, abs=1e-3)

    def test_idempotent_once_matched(self):
        src = contour([150.0, 170.0, 0.0, 190.0], unvoiced_at=(2,))
        refs = [contour([260.0, 280.0])]
        once = shift_to_references(src, refs)
        twice = shift_to_references(once, refs)
        np.testing.assert_allclose(twice, once, atol=1e-4)

    def test_unvoiced_source_raises(self):
        with pytest.raises(NoVoicedFramesError):
            shift_to_references(np.zeros(10), [contour([200.0])])

    def test_unvoiced_references_raise(self):
        with pytest.raises(NoVoicedFramesError):
            shift_to_references(contour([200.0]), [np.zeros(5), np.zeros(3)])

    def test_disabled_passthrough(self):
        src = contour([100.0, 120.0])
        out = shift_to_references(
            src, [contour([400.0])], PitchShiftConfig(enabled=False)
        )
        np.testing.assert_array_equal(out, src)

    @given(
        n=st.integers(min_value=2, max_value=60),
        src_base=st.floats(min_value=120.0, max_value=500.0),
        ref_base=st.floats(min_value=120.0, max_value=500.0),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    @settings(max_examples=120, deadline=None)
    def test_mean_matching_without_clamp(self, n, src_base, ref_base, seed):
        """Mean equality holds to float32 precision when no clamp fires."""
        rng = np.random.default_rng(seed)
        src = (src_base + rng.uniform(-40.0, 40.0, n)).astype(np.float32)
        src[rng.random(n) < 0.2] = 0.0
        if not (src > 0).any():
            src[0] = np.float32(src_base)
        refs = [(ref_base + rng.uniform(-30.0, 30.0, 15)).astype(np.float32)]
        out = shift_to_references(src, refs)
        target = voiced_mean(np.concatenate(refs))
        if out[out > 0].min() > 65.0 + 1e-3:
            assert abs(voiced_mean(out) - target) < 1e-9
        np.testing.assert_array_equal(out == 0.0, src == 0.0)
