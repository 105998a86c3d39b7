"""Inference helpers: checkpoint loading, slice enhancement, HU diff maps."""

import numpy as np
import pytest
import torch

from ctenhance.data import CTSlice, HU_MAX, HU_MIN
from ctenhance.inference import (
    DIFF_MAP_MAX_HU,
    DISPLAY_WINDOW,
    diff_map,
    enhance_slice,
    load_model,
)
from ctenhance.training import build_model, train

from conftest import make_pairs, tiny_model_config
from test_training import _fast_config


class TestLoadModel:
    def test_round_trip_from_training(self, tmp_path):
        pairs = make_pairs(2, size=32, seed=9, n_angles=24)
        result = train(tiny_model_config(), _fast_config(total_iterations=2),
                       pairs, out_dir=tmp_path)
        model, state = load_model(tmp_path / "checkpoint.pt")
        assert state["iteration"] == 2
        assert not model.training
        for k, v in result.model.state_dict().items():
            torch.testing.assert_close(v, model.state_dict()[k], rtol=0, atol=0)

    def test_incompatible_checkpoint_rejected(self, tmp_path):
        path = tmp_path / "bad.pt"
        torch.save({"iteration": 1}, path)
        with pytest.raises(ValueError, match="incompatible"):
            load_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_model(tmp_path / "nope.pt")


class TestEnhanceSlice:
    def test_metadata_and_hu_range(self):
        model = build_model(tiny_model_config(), seed=0)
        px = np.random.default_rng(0).uniform(-800, 800, (32, 32))
        ct = CTSlice(pixels=px, patient_id="p3", slice_index=7)
        out = enhance_slice(model, ct)
        assert (out.patient_id, out.slice_index) == ("p3", 7)
        assert out.pixels.shape == (32, 32)
        assert out.pixels.min() >= HU_MIN and out.pixels.max() <= HU_MAX

    def test_identity_at_init_round_trips_hu(self):
        # zero-init head: enhanced slice equals the input up to float32 transit
        model = build_model(tiny_model_config(), seed=1)
        px = np.random.default_rng(1).uniform(-1000, 2000, (32, 32))
        ct = CTSlice(pixels=px, patient_id="p", slice_index=0)
        out = enhance_slice(model, ct)
        np.testing.assert_allclose(out.pixels, px, atol=2e-3)


class TestDiffMap:
    def test_linear_scaling_oracle(self):
        pred = np.array([[0.0, 50.0, 100.0, 400.0]])
        ref = np.zeros((1, 4))
        np.testing.assert_allclose(diff_map(pred, ref), [[0.0, 0.25, 0.5, 1.0]])

    def test_defaults(self):
        assert DIFF_MAP_MAX_HU == 200.0
        assert DISPLAY_WINDOW == (-160.0, 240.0)

    def test_symmetric_in_sign(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(0, 80, (8, 8)), rng.normal(0, 80, (8, 8))
        np.testing.assert_array_equal(diff_map(a, b), diff_map(b, a))

    def test_custom_max_hu(self):
        pred, ref = np.full((2, 2), 60.0), np.zeros((2, 2))
        np.testing.assert_allclose(diff_map(pred, ref, max_hu=120.0), 0.5)

    def test_validation(self):
        with pytest.raises(ValueError, match="shape"):
            diff_map(np.zeros((2, 2)), np.zeros((3, 3)))
        with pytest.raises(ValueError, match="positive"):
            diff_map(np.zeros((2, 2)), np.zeros((2, 2)), max_hu=0.0)
