"""Training losses: frequency-band perceptual loss plus pixel baselines.

The perceptual loss compares backbone features in three bands and weights
them by fixed contrast-sensitivity-inspired coefficients: mid frequencies
(textures, edges, fine anatomy) count most, low-frequency layout less, and
the high band least.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .backbone import TAP_INDICES, FeatureBackbone

BANDS = tuple(TAP_INDICES)


@dataclass(frozen=True)
class LossWeights:
    """Per-band coefficients for the perceptual loss."""

    lambda_low: float = 0.35
    lambda_mid: float = 0.5
    lambda_high: float = 0.15

    def __post_init__(self):
        for name in ("lambda_low", "lambda_mid", "lambda_high"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    def as_dict(self) -> dict[str, float]:
        return {"low": self.lambda_low, "mid": self.lambda_mid, "high": self.lambda_high}


def _check_images(pred: torch.Tensor, gt: torch.Tensor) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")


def band_loss(backbone: FeatureBackbone, pred: torch.Tensor, gt: torch.Tensor, band: str) -> torch.Tensor:
    """Mean squared distance between one band's features of two images."""
    if band not in BANDS:
        raise ValueError(f"band must be one of {BANDS}, got {band!r}")
    _check_images(pred, gt)
    fp = backbone(pred)[band]
    fg = backbone(gt)[band]
    return torch.mean((fp - fg) ** 2)


def perceptual_loss(
    backbone: FeatureBackbone,
    pred: torch.Tensor,
    gt: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """Weighted sum of the three band losses; differentiable in ``pred``."""
    _check_images(pred, gt)
    fp = backbone(pred)
    fg = backbone(gt)
    w = weights.as_dict()
    total = pred.new_zeros(())
    for band in BANDS:
        total = total + w[band] * torch.mean((fp[band] - fg[band]) ** 2)
    return total


def mse_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    _check_images(pred, gt)
    return torch.mean((pred - gt) ** 2)


def charbonnier_loss(pred: torch.Tensor, gt: torch.Tensor, eps: float = 1e-3) -> torch.Tensor:
    """Smooth L1-like penalty: mean of sqrt(diff^2 + eps^2)."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    _check_images(pred, gt)
    return torch.mean(torch.sqrt((pred - gt) ** 2 + eps * eps))
