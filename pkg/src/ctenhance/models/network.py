"""The full enhancement network: dual-path features into a state-space trunk.

The network predicts a residual on top of the input image. The
reconstruction head starts at zero, so an untrained model is exactly the
identity; training only ever has to learn the correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .blocks import BlockConfig, ResidualGroup
from .extractor import PATCH, DualPathExtractor, SemanticEncoderConfig, pad_to_multiple


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to rebuild the network deterministically."""

    embed_dim: int = 96
    state_dim: int = 16
    conv_kernels: tuple[int, ...] = (3, 5, 7)
    skip_scale_init: float = 1.0
    n_groups: int = 4
    blocks_per_group: int = 3
    global_residual: bool = True
    local_width: int = 64
    encoder: SemanticEncoderConfig = field(default_factory=SemanticEncoderConfig)
    scan_backend: str = "auto"

    def __post_init__(self):
        if self.n_groups < 1:
            raise ValueError(f"n_groups must be >= 1, got {self.n_groups}")
        if self.blocks_per_group < 1:
            raise ValueError(f"blocks_per_group must be >= 1, got {self.blocks_per_group}")
        if self.local_width < 1:
            raise ValueError(f"local_width must be >= 1, got {self.local_width}")
        object.__setattr__(self, "conv_kernels", tuple(self.conv_kernels))

    def block_config(self) -> BlockConfig:
        return BlockConfig(
            embed_dim=self.embed_dim,
            state_dim=self.state_dim,
            conv_kernels=self.conv_kernels,
            skip_scale_init=self.skip_scale_init,
        )

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "state_dim": self.state_dim,
            "conv_kernels": list(self.conv_kernels),
            "skip_scale_init": self.skip_scale_init,
            "n_groups": self.n_groups,
            "blocks_per_group": self.blocks_per_group,
            "global_residual": self.global_residual,
            "local_width": self.local_width,
            "encoder": {
                "patch_size": self.encoder.patch_size,
                "depth": self.encoder.depth,
                "embed_dim": self.encoder.embed_dim,
                "n_heads": self.encoder.n_heads,
                "weights_path": self.encoder.weights_path,
                "fallback_seed": self.encoder.fallback_seed,
            },
            "scan_backend": self.scan_backend,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        encoder = SemanticEncoderConfig(**payload.get("encoder", {}))
        fields = {k: v for k, v in payload.items() if k != "encoder"}
        if "conv_kernels" in fields:
            fields["conv_kernels"] = tuple(fields["conv_kernels"])
        return cls(encoder=encoder, **fields)


class EnhancementNetwork(nn.Module):
    """Extractor -> residual groups -> 3x3 reconstruction -> global residual."""

    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.config = config
        self.extractor = DualPathExtractor(
            encoder_config=config.encoder,
            local_width=config.local_width,
            out_dim=config.embed_dim,
        )
        block_cfg = config.block_config()
        self.groups = nn.ModuleList(
            ResidualGroup(block_cfg, config.blocks_per_group, backend=config.scan_backend)
            for _ in range(config.n_groups)
        )
        self.reconstruct = nn.Conv2d(config.embed_dim, 1, 3, padding=1)
        nn.init.zeros_(self.reconstruct.weight)
        nn.init.zeros_(self.reconstruct.bias)

    def trainable_parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        """Enhance a batch of single-channel [0,1] images; shape is preserved."""
        if image.ndim == 2:
            image = image[None, None]
        elif image.ndim == 3:
            image = image[:, None]
        if image.ndim != 4 or image.shape[1] != 1:
            raise ValueError(f"expected (B, 1, H, W) input, got {tuple(image.shape)}")
        if not torch.isfinite(image).all():
            raise ValueError("input contains non-finite values")

        h, w = image.shape[-2:]
        padded = pad_to_multiple(image, PATCH)
        features = self.extractor(padded)
        for group in self.groups:
            features = group(features)
        residual = self.reconstruct(features)
        out = padded + residual if self.config.global_residual else residual
        return out[..., :h, :w]
