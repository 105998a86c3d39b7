"""Dual-path feature extraction: frozen semantic prior plus local details.

The semantic branch patchifies the image, runs a frozen vision transformer,
and bilinearly upsamples the token grid back to pixel resolution, so every
pixel carries a high-level anatomical context vector. The local branch is
two 3x3 convolutions capturing fine structure the 16x16 patch grid washes
out. A 1x1 fusion projects the concatenation to the trunk width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

PATCH = 16


@dataclass(frozen=True)
class SemanticEncoderConfig:
    """Frozen transformer settings; defaults give 192-wide tokens at stride 16."""

    patch_size: int = PATCH
    depth: int = 12
    embed_dim: int = 192
    n_heads: int = 3
    weights_path: str | None = None
    fallback_seed: int = 0

    def __post_init__(self):
        if self.patch_size < 1 or self.depth < 1 or self.embed_dim < 1:
            raise ValueError("patch_size, depth, and embed_dim must all be >= 1")
        if self.embed_dim % self.n_heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} must divide evenly into {self.n_heads} heads"
            )


def pad_to_multiple(image: torch.Tensor, multiple: int = PATCH) -> torch.Tensor:
    """Reflect-pad the bottom/right of (B, C, H, W) up to the next multiple."""
    h, w = image.shape[-2:]
    pad_h = (multiple - h % multiple) % multiple
    pad_w = (multiple - w % multiple) % multiple
    if pad_h == 0 and pad_w == 0:
        return image
    return F.pad(image, (0, pad_w, 0, pad_h), mode="reflect")


def patchify(image: torch.Tensor) -> tuple[torch.Tensor, tuple[int, int]]:
    """Cut a single-channel [0,1] image into non-overlapping 16x16 RGB tokens.

    Returns (tokens, grid): tokens of shape (B, grid_h * grid_w, 3*16*16)
    after channel replication and reflect padding to multiples of 16.
    """
    if image.ndim == 2:
        image = image[None, None]
    elif image.ndim == 3:
        image = image[:, None]
    if image.ndim != 4 or image.shape[1] != 1:
        raise ValueError(f"expected single-channel images, got shape {tuple(image.shape)}")
    if image.shape[-1] == 0 or image.shape[-2] == 0:
        raise ValueError("image is empty")
    padded = pad_to_multiple(image, PATCH).expand(-1, 3, -1, -1)
    grid = (padded.shape[-2] // PATCH, padded.shape[-1] // PATCH)
    tokens = F.unfold(padded, kernel_size=PATCH, stride=PATCH).transpose(1, 2)
    return tokens, grid


def _sincos_position_embedding(grid: tuple[int, int], dim: int) -> torch.Tensor:
    """Fixed 2D sine-cosine position embedding, (grid_h * grid_w, dim)."""
    if dim % 4 != 0:
        raise ValueError(f"position embedding width must be divisible by 4, got {dim}")
    quarter = dim // 4
    omega = 1.0 / (10000 ** (torch.arange(quarter, dtype=torch.float32) / quarter))
    ys, xs = torch.meshgrid(
        torch.arange(grid[0], dtype=torch.float32),
        torch.arange(grid[1], dtype=torch.float32),
        indexing="ij",
    )
    parts = []
    for coord in (ys.reshape(-1), xs.reshape(-1)):
        angles = coord[:, None] * omega[None, :]
        parts.extend([torch.sin(angles), torch.cos(angles)])
    return torch.cat(parts, dim=1)


class _EncoderBlock(nn.Module):
    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, n_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        normed = self.norm1(x)
        x = x + self.attn(normed, normed, normed, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class SemanticEncoder(nn.Module):
    """Frozen pre-norm transformer over patch tokens; outputs a (C, H', W') map.

    Weights load from a state-dict file when available; otherwise the encoder
    is randomly initialized from a fixed seed so runs stay reproducible. In
    both cases every parameter is frozen and the module is pinned to eval
    mode.
    """

    def __init__(self, config: SemanticEncoderConfig = SemanticEncoderConfig()):
        super().__init__()
        self.config = config
        dim = config.embed_dim
        with torch.random.fork_rng():
            torch.manual_seed(config.fallback_seed)
            self.patch_embed = nn.Linear(3 * config.patch_size**2, dim)
            self.blocks = nn.ModuleList(
                _EncoderBlock(dim, config.n_heads) for _ in range(config.depth)
            )
            self.norm = nn.LayerNorm(dim)
        if config.weights_path is not None:
            self._load_weights(Path(config.weights_path))
            self.pretrained = True
        else:
            self.pretrained = False
        self.requires_grad_(False)
        super().train(False)

    def _load_weights(self, path: Path) -> None:
        if not path.exists():
            raise FileNotFoundError(f"semantic encoder weights not found at {path}")
        state = torch.load(path, map_location="cpu", weights_only=True)
        own = self.state_dict()
        for key, value in state.items():
            if key not in own:
                raise ValueError(f"unexpected key {key!r} in semantic encoder weights")
            if own[key].shape != value.shape:
                raise ValueError(
                    f"shape mismatch for {key!r}: file {tuple(value.shape)} vs "
                    f"model {tuple(own[key].shape)}"
                )
        missing = set(own) - set(state)
        if missing:
            raise ValueError(f"semantic encoder weights missing keys: {sorted(missing)[:4]}...")
        self.load_state_dict(state)

    def train(self, mode: bool = True) -> "SemanticEncoder":
        return super().train(False)

    def checksum(self) -> float:
        return float(sum(p.abs().sum().item() for p in self.parameters()))

    def forward(self, tokens: torch.Tensor, grid: tuple[int, int]) -> torch.Tensor:
        if tokens.ndim != 3 or tokens.shape[1] != grid[0] * grid[1]:
            raise ValueError(
                f"tokens {tuple(tokens.shape)} do not match grid {grid}"
            )
        x = self.patch_embed(tokens)
        x = x + _sincos_position_embedding(grid, self.config.embed_dim).to(x.dtype)
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        b = x.shape[0]
        return x.transpose(1, 2).reshape(b, self.config.embed_dim, grid[0], grid[1])


def upsample_semantic(feature_map: torch.Tensor, target_hw: tuple[int, int]) -> torch.Tensor:
    """Bilinear x16 upsampling of (B, C, H', W'), cropped to the target size."""
    up = F.interpolate(feature_map, scale_factor=PATCH, mode="bilinear", align_corners=False)
    h, w = target_hw
    if up.shape[-2] < h or up.shape[-1] < w:
        raise ValueError(f"upsampled map {tuple(up.shape[-2:])} smaller than target {target_hw}")
    return up[..., :h, :w]


class LocalDetailExtractor(nn.Module):
    """Two 3x3 convolutions with a ReLU between; spatial shape preserved."""

    def __init__(self, width: int = 64):
        super().__init__()
        self.conv1 = nn.Conv2d(1, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.conv2(F.relu(self.conv1(image)))


class FeatureFusion(nn.Module):
    """Concatenate the two paths and project to the trunk width."""

    def __init__(self, semantic_dim: int, local_dim: int, out_dim: int):
        super().__init__()
        self.project = nn.Conv2d(semantic_dim + local_dim, out_dim, kernel_size=1)

    def forward(self, semantic: torch.Tensor, local: torch.Tensor) -> torch.Tensor:
        if semantic.shape[-2:] != local.shape[-2:]:
            raise ValueError(
                f"spatial mismatch: semantic {tuple(semantic.shape[-2:])} vs "
                f"local {tuple(local.shape[-2:])}"
            )
        return F.gelu(self.project(torch.cat([semantic, local], dim=1)))


class DualPathExtractor(nn.Module):
    """Semantic prior + local details, fused to the trunk embedding width."""

    def __init__(
        self,
        encoder_config: SemanticEncoderConfig = SemanticEncoderConfig(),
        local_width: int = 64,
        out_dim: int = 96,
    ):
        super().__init__()
        self.encoder = SemanticEncoder(encoder_config)
        self.local = LocalDetailExtractor(local_width)
        self.fusion = FeatureFusion(encoder_config.embed_dim, local_width, out_dim)

    def semantic_map(self, image: torch.Tensor, target_hw: tuple[int, int]) -> torch.Tensor:
        tokens, grid = patchify(image)
        with torch.no_grad():
            encoded = self.encoder(tokens, grid)
        return upsample_semantic(encoded, target_hw)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.ndim != 4 or image.shape[1] != 1:
            raise ValueError(f"expected (B, 1, H, W) input, got {tuple(image.shape)}")
        semantic = self.semantic_map(image, image.shape[-2:])
        return self.fusion(semantic, self.local(image))


def pooled_embedding(encoder: SemanticEncoder, image: torch.Tensor) -> np.ndarray:
    """Mean-over-tokens encoder embedding of one image, as a 1D vector."""
    tokens, grid = patchify(image)
    with torch.no_grad():
        encoded = encoder(tokens, grid)
    return encoded.mean(dim=(2, 3)).squeeze(0).numpy().astype(np.float64)


def project_2d(vectors: np.ndarray) -> np.ndarray:
    """Deterministic PCA projection of row vectors to 2D."""
    if vectors.ndim != 2 or vectors.shape[0] < 2:
        raise ValueError("need at least 2 vectors to project")
    centered = vectors - vectors.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2]
    if components.shape[0] < 2:
        components = np.vstack([components, np.zeros_like(components[0])])
    # Pin the sign so the projection does not flip run to run.
    for i in range(2):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    return centered @ components.T


def embed_analysis(pairs, encoder: SemanticEncoder) -> list[dict]:
    """Project pooled LD/HD embeddings to 2D points with dose labels.

    Returns one point per slice per dose: {x, y, dose, patient_id,
    slice_index}, suitable for a scatter plot of the embedding layout.
    """
    if len(pairs) < 2:
        raise ValueError(f"need at least 2 pairs, got {len(pairs)}")
    from ..data.slices import normalize_hu

    vectors = []
    labels = []
    for pair in pairs:
        for dose, ct in (("low", pair.ldct), ("high", pair.hdct)):
            image = torch.from_numpy(normalize_hu(ct.pixels)).to(torch.float32)
            vectors.append(pooled_embedding(encoder, image))
            labels.append((dose, ct.patient_id, ct.slice_index))
    points = project_2d(np.stack(vectors))
    return [
        {
            "x": float(points[i, 0]),
            "y": float(points[i, 1]),
            "dose": labels[i][0],
            "patient_id": labels[i][1],
            "slice_index": labels[i][2],
        }
        for i in range(len(labels))
    ]
