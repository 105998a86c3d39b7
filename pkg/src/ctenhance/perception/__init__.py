"""Perceptual feature backbone and training losses."""

from .backbone import BAND_CHANNELS, IMAGENET_MEAN, IMAGENET_STD, TAP_INDICES, FeatureBackbone
from .losses import BANDS, LossWeights, band_loss, charbonnier_loss, mse_loss, perceptual_loss

__all__ = [
    "FeatureBackbone",
    "LossWeights",
    "TAP_INDICES",
    "BAND_CHANNELS",
    "BANDS",
    "IMAGENET_MEAN",
    "IMAGENET_STD",
    "band_loss",
    "perceptual_loss",
    "mse_loss",
    "charbonnier_loss",
]
