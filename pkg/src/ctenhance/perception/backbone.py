"""Frozen VGG16 feature backbone with low/mid/high tap points.

Taps sit at the end of conv blocks 1, 3, and 5 (after the ReLU, before the
pool), so receptive field and stride grow monotonically across the bands:
(64, H, W), (256, H/4, W/4), (512, H/16, W/16).

Weights come from a state-dict file when one is provided. Without one, the
backbone is randomly initialized from a fixed seed: feature distances are
still a meaningful (if uncalibrated) perceptual proxy, and everything stays
deterministic. ``pretrained`` records which case applies.
"""

from __future__ import annotations

from pathlib import Path

import torch
from torch import nn
from torchvision.models import vgg16

TAP_INDICES = {"low": 3, "mid": 15, "high": 29}
BAND_CHANNELS = {"low": 64, "mid": 256, "high": 512}
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class FeatureBackbone(nn.Module):
    """VGG16 trunk up to conv block 5, frozen, with three feature taps."""

    def __init__(self, weights_path: str | Path | None = None, fallback_seed: int = 0):
        super().__init__()
        trunk = vgg16(weights=None).features[: TAP_INDICES["high"] + 1]
        if weights_path is not None:
            self._load_weights(trunk, Path(weights_path))
            self.pretrained = True
        else:
            self._seed_init(trunk, fallback_seed)
            self.pretrained = False
        self.trunk = trunk
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.requires_grad_(False)
        super().train(False)

    @staticmethod
    def _load_weights(trunk: nn.Module, path: Path) -> None:
        if not path.exists():
            raise FileNotFoundError(f"backbone weights not found at {path}")
        state = torch.load(path, map_location="cpu", weights_only=True)
        if any(k.startswith("features.") for k in state):
            state = {
                k[len("features."):]: v for k, v in state.items() if k.startswith("features.")
            }
        state = {k: v for k, v in state.items() if k in dict(trunk.named_parameters())}
        missing = set(dict(trunk.named_parameters())) - set(state)
        if missing:
            raise ValueError(f"backbone weight file is missing parameters: {sorted(missing)[:4]}...")
        trunk.load_state_dict(state)

    @staticmethod
    def _seed_init(trunk: nn.Module, seed: int) -> None:
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            for m in trunk.modules():
                if isinstance(m, nn.Conv2d):
                    nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
                    nn.init.zeros_(m.bias)

    def train(self, mode: bool = True) -> "FeatureBackbone":
        # Stays in eval mode no matter what the surrounding trainer does.
        return super().train(False)

    def checksum(self) -> float:
        return float(sum(p.abs().sum().item() for p in self.parameters()))

    def _prepare(self, image: torch.Tensor) -> torch.Tensor:
        if image.ndim == 2:
            image = image[None, None]
        elif image.ndim == 3:
            image = image[:, None]
        if image.ndim != 4 or image.shape[1] != 1:
            raise ValueError(f"expected single-channel images, got shape {tuple(image.shape)}")
        x = image.expand(-1, 3, -1, -1).to(self.mean.dtype)
        return (x - self.mean) / self.std

    def forward(self, image: torch.Tensor) -> dict[str, torch.Tensor]:
        """Map a batch of single-channel [0,1] images to the three band features."""
        x = self._prepare(image)
        taps = {}
        for i, layer in enumerate(self.trunk):
            x = layer(x)
            for band, idx in TAP_INDICES.items():
                if i == idx:
                    taps[band] = x
        return taps
