"""Model components: selective scan, trunk blocks, extractor, full network."""

from .blocks import (
    BlockConfig,
    GlobalLocalBlock,
    MultiScaleConvBlock,
    ResidualGroup,
    SS2D,
)
from .extractor import (
    DualPathExtractor,
    FeatureFusion,
    LocalDetailExtractor,
    SemanticEncoder,
    SemanticEncoderConfig,
    embed_analysis,
    pad_to_multiple,
    patchify,
    pooled_embedding,
    project_2d,
    upsample_semantic,
)
from .network import EnhancementNetwork, ModelConfig
from .scan import DELTA_FLOOR, SsmParams, selective_scan_1d

__all__ = [
    "SsmParams",
    "selective_scan_1d",
    "DELTA_FLOOR",
    "SS2D",
    "MultiScaleConvBlock",
    "GlobalLocalBlock",
    "ResidualGroup",
    "BlockConfig",
    "SemanticEncoderConfig",
    "SemanticEncoder",
    "LocalDetailExtractor",
    "FeatureFusion",
    "DualPathExtractor",
    "patchify",
    "pad_to_multiple",
    "upsample_semantic",
    "pooled_embedding",
    "project_2d",
    "embed_analysis",
    "EnhancementNetwork",
    "ModelConfig",
]
