"""Applying a trained model to slices, plus display-domain helpers."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .data.slices import CTSlice, denormalize_hu, normalize_hu
from .models.network import EnhancementNetwork, ModelConfig
from .training import enhance_image, load_checkpoint

DIFF_MAP_MAX_HU = 200.0
DISPLAY_WINDOW = (-160.0, 240.0)


def load_model(checkpoint_path: str | Path) -> tuple[EnhancementNetwork, dict]:
    """Rebuild the network a checkpoint was trained with and load its weights."""
    state = load_checkpoint(checkpoint_path)
    try:
        config = ModelConfig.from_dict(state["model_config"])
        model = EnhancementNetwork(config)
        model.load_state_dict(state["model_state"])
    except (KeyError, TypeError, RuntimeError) as exc:
        raise ValueError(f"checkpoint at {checkpoint_path} is incompatible: {exc}") from exc
    model.eval()
    return model, state


def enhance_slice(model: EnhancementNetwork, ct: CTSlice) -> CTSlice:
    """Enhance one slice; metadata is preserved, values stay valid HU."""
    low = torch.from_numpy(normalize_hu(ct.pixels)).to(torch.float32)
    out = enhance_image(model, low[None, None])[0, 0].numpy().astype(np.float64)
    return CTSlice(
        pixels=denormalize_hu(out), patient_id=ct.patient_id, slice_index=ct.slice_index
    )


def diff_map(pred: np.ndarray, ref: np.ndarray, max_hu: float = DIFF_MAP_MAX_HU) -> np.ndarray:
    """Absolute HU difference mapped linearly from [0, max_hu] to [0, 1], clamped."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    if max_hu <= 0:
        raise ValueError(f"max_hu must be positive, got {max_hu}")
    return np.clip(np.abs(pred - ref) / max_hu, 0.0, 1.0)
