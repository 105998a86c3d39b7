"""Slice container, file round trips, and HU windowing."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctenhance.data import (
    HU_MAX,
    HU_MIN,
    CTSlice,
    PairedSample,
    SliceFormatError,
    denormalize_hu,
    hu_window,
    load_slice,
    normalize_hu,
    save_slice,
)


def _slice(seed=0, size=24, patient="pA", index=3) -> CTSlice:
    rng = np.random.default_rng(seed)
    hu = rng.uniform(-1000.0, 2000.0, size=(size, size))
    return CTSlice(pixels=hu, patient_id=patient, slice_index=index)


class TestCTSlice:
    def test_rejects_non_2d(self):
        with pytest.raises(SliceFormatError):
            CTSlice(pixels=np.zeros((4, 16, 16)), patient_id="p", slice_index=0)

    def test_rejects_tiny_slices(self):
        with pytest.raises(SliceFormatError):
            CTSlice(pixels=np.zeros((8, 8)), patient_id="p", slice_index=0)

    def test_rejects_non_finite(self):
        px = np.zeros((16, 16))
        px[3, 3] = np.nan
        with pytest.raises(SliceFormatError):
            CTSlice(pixels=px, patient_id="p", slice_index=0)

    def test_rejects_out_of_range_hu(self):
        px = np.zeros((16, 16))
        px[0, 0] = HU_MAX + 1
        with pytest.raises(SliceFormatError):
            CTSlice(pixels=px, patient_id="p", slice_index=0)

    def test_pixels_coerced_to_float64(self):
        slc = CTSlice(np.zeros((16, 16), dtype=np.int16), "p", 0)
        assert slc.pixels.dtype == np.float64
        assert slc.shape == (16, 16)


class TestPairedSample:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            PairedSample(_slice(size=24), _slice(size=32))

    def test_metadata_mismatch_rejected(self):
        with pytest.raises(ValueError, match="patient_id"):
            PairedSample(_slice(patient="pA"), _slice(patient="pB"))
        with pytest.raises(ValueError, match="slice_index"):
            PairedSample(_slice(index=1), _slice(index=2))


class TestRoundTrip:
    def test_npy_round_trip(self, tmp_path):
        slc = _slice(seed=5)
        path = save_slice(slc, tmp_path / "s.npy")
        back = load_slice(path)
        # storage is float32, so compare at float32 precision
        np.testing.assert_allclose(back.pixels, slc.pixels, rtol=0, atol=1e-3)
        assert back.patient_id == "pA"
        assert back.slice_index == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_slice(tmp_path / "absent.npy")

    def test_non_2d_payload_rejected(self, tmp_path):
        np.save(tmp_path / "bad.npy", np.zeros((2, 16, 16), dtype=np.float32))
        with pytest.raises(SliceFormatError):
            load_slice(tmp_path / "bad.npy")

    def test_sidecar_rescale_applied(self, tmp_path):
        np.save(tmp_path / "s.npy", np.full((16, 16), 10.0, dtype=np.float32))
        (tmp_path / "s.npy.json").write_text(
            json.dumps({"slope": 2.0, "intercept": -1000.0, "patient_id": "pX", "slice_index": 7})
        )
        slc = load_slice(tmp_path / "s.npy")
        assert np.all(slc.pixels == 10.0 * 2.0 - 1000.0)
        assert (slc.patient_id, slc.slice_index) == ("pX", 7)

    def test_png_defaults_to_dicom_offset(self, tmp_path):
        from PIL import Image

        stored = np.full((16, 16), 1024, dtype=np.uint16)
        Image.fromarray(stored).save(tmp_path / "s.png")
        slc = load_slice(tmp_path / "s.png")
        assert np.all(slc.pixels == 0.0)  # 1024 * 1 - 1024


class TestWindowing:
    def test_hu_window_oracle(self):
        px = np.array([[-500.0, -160.0, 40.0, 240.0, 500.0]] * 16)[:, :5]
        px = np.tile(px, (1, 4))[:16, :16]
        got = hu_window(px, -160.0, 240.0)
        want = np.clip((px + 160.0) / 400.0, 0.0, 1.0)
        np.testing.assert_array_equal(got, want)
        assert got.min() == 0.0 and got.max() == 1.0

    def test_window_requires_ordered_bounds(self):
        with pytest.raises(ValueError):
            hu_window(np.zeros((16, 16)), 100.0, -100.0)

    def test_accepts_ctslice(self):
        slc = _slice()
        np.testing.assert_array_equal(hu_window(slc, -160, 240), hu_window(slc.pixels, -160, 240))

    @given(
        st.lists(
            st.floats(min_value=HU_MIN, max_value=HU_MAX, allow_nan=False),
            min_size=4,
            max_size=16,
        )
    )
    def test_normalize_denormalize_inverse(self, values):
        hu = np.asarray(values, dtype=np.float64)
        back = denormalize_hu(normalize_hu(hu))
        np.testing.assert_allclose(back, hu, atol=1e-9)

    def test_denormalize_clamps(self):
        out = denormalize_hu(np.array([-0.5, 0.0, 1.0, 1.5]))
        np.testing.assert_array_equal(out, [HU_MIN, HU_MIN, HU_MAX, HU_MAX])
