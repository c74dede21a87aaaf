"""Round-trip and corruption tests for the MRSV tensor container."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singsynth import mrsv


class TestSingleTensor:
    @pytest.mark.parametrize(
        "dtype", [np.float32, np.float64, np.int32, np.int64]
    )
    def test_round_trip_preserves_dtype_and_values(self, tmp_path, dtype):
        rng = np.random.default_rng(0)
        array = (rng.standard_normal((5, 7)) * 100).astype(dtype)
        path = tmp_path / "t.mrsv"
        mrsv.write_tensor(path, array)
        back = mrsv.read_tensor(path)
        assert back.dtype == np.dtype(dtype)
        np.testing.assert_array_equal(back, array)

    @pytest.mark.parametrize("shape", [(), (0,), (3,), (2, 0, 4), (1, 2, 3, 4)])
    def test_round_trip_preserves_shape(self, tmp_path, shape):
        array = np.zeros(shape, dtype=np.float32)
        path = tmp_path / "t.mrsv"
        mrsv.write_tensor(path, array)
        assert mrsv.read_tensor(path).shape == shape

    def test_unsupported_dtype_rejected(self, tmp_path):
        with pytest.raises(mrsv.MrsvFormatError, match="dtype"):
            mrsv.write_tensor(tmp_path / "t.mrsv", np.zeros(3, dtype=np.float16))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "t.mrsv"
        mrsv.write_tensor(path, np.zeros(3, dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(mrsv.MrsvFormatError, match="magic"):
            mrsv.read_tensor(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "t.mrsv"
        mrsv.write_tensor(path, np.zeros(3, dtype=np.float32))
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(mrsv.MrsvFormatError, match="trailing"):
            mrsv.read_tensor(path)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "t.mrsv"
        mrsv.write_tensor(path, np.arange(100, dtype=np.int64))
        path.write_bytes(path.read_bytes()[:30])
        with pytest.raises(mrsv.MrsvFormatError):
            mrsv.read_tensor(path)

    @given(
        data=st.lists(
            st.floats(allow_nan=False, allow_infinity=False, width=32),
            min_size=0,
            max_size=50,
        )
    )
    @settings(max_examples=25, deadline=None)
    def test_any_finite_float32_payload_round_trips(self, tmp_path_factory, data):
        path = tmp_path_factory.mktemp("h") / "t.mrsv"
        array = np.asarray(data, dtype=np.float32)
        mrsv.write_tensor(path, array)
        np.testing.assert_array_equal(mrsv.read_tensor(path), array)


class TestBundle:
    def test_round_trip_with_meta(self, tmp_path):
        tensors = {
            "enc.weight": np.ones((2, 3), dtype=np.float32),
            "enc.bias": np.zeros(3, dtype=np.float64),
            "steps": np.array([4], dtype=np.int64),
        }
        meta = {"step": 12, "note": "hello"}
        path = tmp_path / "b.mrsv"
        mrsv.write_bundle(path, tensors, meta=meta)
        back_tensors, back_meta = mrsv.read_bundle(path)
        assert back_meta == meta
        assert set(back_tensors) == set(tensors)
        for name in tensors:
            np.testing.assert_array_equal(back_tensors[name], tensors[name])
            assert back_tensors[name].dtype == tensors[name].dtype

    def test_empty_bundle_round_trips(self, tmp_path):
        path = tmp_path / "b.mrsv"
        mrsv.write_bundle(path, {}, meta={})
        tensors, meta = mrsv.read_bundle(path)
        assert tensors == {} and meta == {}

    def test_tensor_reader_rejects_bundle(self, tmp_path):
        path = tmp_path / "b.mrsv"
        mrsv.write_bundle(path, {"x": np.zeros(2, dtype=np.float32)})
        with pytest.raises(mrsv.MrsvFormatError, match="bundle"):
            mrsv.read_tensor(path)

    def test_bundle_reader_rejects_tensor(self, tmp_path):
        path = tmp_path / "t.mrsv"
        mrsv.write_tensor(path, np.zeros(2, dtype=np.float32))
        with pytest.raises(mrsv.MrsvFormatError, match="bundle"):
            mrsv.read_bundle(path)
