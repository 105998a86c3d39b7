"""Shared fixtures: tiny model configs and synthetic paired data."""

import numpy as np
import pytest
import torch

from ctenhance.data import NoiseModelConfig, simulate_low_dose, synthetic_body_slice
from ctenhance.models import ModelConfig, SemanticEncoderConfig


def tiny_model_config(**overrides) -> ModelConfig:
    """Smallest config that exercises every architectural path."""
    defaults = dict(
        embed_dim=16,
        state_dim=4,
        n_groups=1,
        blocks_per_group=1,
        local_width=8,
        encoder=SemanticEncoderConfig(depth=1, embed_dim=32, n_heads=2),
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)


def smoke_model_config() -> ModelConfig:
    """Slightly larger config used by the training smoke tests."""
    return ModelConfig(
        embed_dim=32,
        state_dim=8,
        n_groups=2,
        blocks_per_group=2,
        local_width=16,
        encoder=SemanticEncoderConfig(depth=2, embed_dim=64, n_heads=2),
    )


def make_pairs(count: int, size: int = 64, seed: int = 0, n_angles: int = 96):
    """Simulated low/high dose pairs, deterministic in ``seed``."""
    pairs = []
    for i in range(count):
        hd = synthetic_body_slice(
            size=size, seed=seed * 1000 + i, patient_id=f"p{i % 3}", slice_index=i
        )
        noise = NoiseModelConfig(seed=seed * 1000 + 500 + i)
        pairs.append(simulate_low_dose(hd, noise, n_angles=n_angles))
    return pairs


@pytest.fixture(scope="session")
def paired_samples():
    return make_pairs(4, size=64, seed=11)


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)
    np.random.seed(0)
    yield
