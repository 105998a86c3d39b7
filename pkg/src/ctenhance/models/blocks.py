"""Building blocks of the enhancement trunk.

Each block mixes a global branch (four-directional 2D selective scan) with
a local branch (parallel depthwise convolutions at several kernel sizes)
over a shared layer norm, joined by a learnable per-channel skip scale.
Groups of blocks sit inside residual wrappers so low-frequency content
passes straight through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .scan import DELTA_FLOOR, SsmParams, selective_scan_1d

N_SCAN_DIRECTIONS = 4
DT_MIN = 1e-3
DT_MAX = 1e-1
DT_INIT_FLOOR = 1e-4


@dataclass(frozen=True)
class BlockConfig:
    """Shape and init settings shared by all trunk blocks."""

    embed_dim: int = 96
    state_dim: int = 16
    conv_kernels: tuple[int, ...] = (3, 5, 7)
    skip_scale_init: float = 1.0

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.state_dim < 1:
            raise ValueError(f"state_dim must be >= 1, got {self.state_dim}")
        if not self.conv_kernels:
            raise ValueError("conv_kernels must be non-empty")
        for k in self.conv_kernels:
            if k < 1 or k % 2 == 0:
                raise ValueError(f"conv kernels must be odd and positive, got {k}")


class SS2D(nn.Module):
    """Four-directional selective scan over a 2D feature map.

    The map is flattened along row-major forward/backward and column-major
    forward/backward orders; each order gets its own selective projections
    and state matrix. The four un-flattened results are summed and passed
    through a 1x1 output projection.
    """

    def __init__(self, dim: int, state_dim: int = 16, backend: str = "auto"):
        super().__init__()
        self.dim = dim
        self.state_dim = state_dim
        self.dt_rank = max(1, math.ceil(dim / 16))
        self.backend = backend
        k = N_SCAN_DIRECTIONS

        proj_out = self.dt_rank + 2 * state_dim
        x_proj = torch.empty(k, proj_out, dim)
        for i in range(k):
            nn.init.kaiming_uniform_(x_proj[i], a=math.sqrt(5))
        self.x_proj_weight = nn.Parameter(x_proj)

        dt_w = torch.empty(k, dim, self.dt_rank)
        dt_std = self.dt_rank**-0.5
        nn.init.uniform_(dt_w, -dt_std, dt_std)
        self.dt_proj_weight = nn.Parameter(dt_w)
        # Bias set so softplus(bias) lands log-uniformly in [DT_MIN, DT_MAX]:
        # step sizes start small and well-spread, which keeps the scan stable.
        dt = torch.exp(
            torch.rand(k, dim) * (math.log(DT_MAX) - math.log(DT_MIN)) + math.log(DT_MIN)
        ).clamp(min=DT_INIT_FLOOR)
        self.dt_proj_bias = nn.Parameter(dt + torch.log(-torch.expm1(-dt)))

        a_log = torch.log(torch.arange(1, state_dim + 1, dtype=torch.float32))
        self.A_log = nn.Parameter(a_log.expand(k, dim, state_dim).contiguous())
        self.skip = nn.Parameter(torch.ones(k, dim))
        self.out_proj = nn.Conv2d(dim, dim, kernel_size=1)

    def _flatten(self, x: torch.Tensor, direction: int) -> torch.Tensor:
        if direction == 0:
            return x.flatten(2)
        if direction == 1:
            return x.flatten(2).flip(-1)
        if direction == 2:
            return x.transpose(2, 3).flatten(2)
        if direction == 3:
            return x.transpose(2, 3).flatten(2).flip(-1)
        raise ValueError(f"direction must be in 0..3, got {direction}")

    def _unflatten(self, y: torch.Tensor, direction: int, h: int, w: int) -> torch.Tensor:
        b, c, _ = y.shape
        if direction in (1, 3):
            y = y.flip(-1)
        if direction in (0, 1):
            return y.view(b, c, h, w)
        return y.view(b, c, w, h).transpose(2, 3)

    def direction_params(self, seq: torch.Tensor, direction: int) -> SsmParams:
        """Selective parameters (delta, B, C plus A, D) for one scan order."""
        dbl = torch.einsum("bcl,rc->brl", seq, self.x_proj_weight[direction])
        dt, b_proj, c_proj = torch.split(
            dbl, [self.dt_rank, self.state_dim, self.state_dim], dim=1
        )
        dt = torch.einsum("brl,cr->bcl", dt, self.dt_proj_weight[direction])
        delta = F.softplus(dt + self.dt_proj_bias[direction][None, :, None]) + DELTA_FLOOR
        return SsmParams(
            A=-torch.exp(self.A_log[direction]),
            B=b_proj,
            C=c_proj,
            delta=delta,
            D=self.skip[direction],
        )

    def scan_direction(self, x: torch.Tensor, direction: int) -> torch.Tensor:
        """One direction's scan, mapped back to (B, C, H, W); pre-merge."""
        h, w = x.shape[2], x.shape[3]
        seq = self._flatten(x, direction).contiguous()
        y = selective_scan_1d(seq, self.direction_params(seq, direction), self.backend)
        return self._unflatten(y, direction, h, w)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} channels, got {x.shape[1]}")
        merged = self.scan_direction(x, 0)
        for direction in range(1, N_SCAN_DIRECTIONS):
            merged = merged + self.scan_direction(x, direction)
        return self.out_proj(merged)


class MultiScaleConvBlock(nn.Module):
    """Parallel depthwise convolutions at several kernel sizes, fused by 1x1 conv."""

    def __init__(self, dim: int, kernels: tuple[int, ...] = (3, 5, 7)):
        super().__init__()
        for k in kernels:
            if k % 2 == 0:
                raise ValueError(f"kernels must be odd, got {k}")
        self.branches = nn.ModuleList(
            nn.Conv2d(dim, dim, k, padding=k // 2, groups=dim) for k in kernels
        )
        self.fuse = nn.Conv2d(dim * len(kernels), dim, kernel_size=1)

    def branch_responses(self, x: torch.Tensor) -> list[torch.Tensor]:
        return [branch(x) for branch in self.branches]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fuse(torch.cat(self.branch_responses(x), dim=1))


class GlobalLocalBlock(nn.Module):
    """y = skip_scale * x + SS2D(LN(x)) + MultiScaleConv(LN(x)), shared LN."""

    def __init__(self, config: BlockConfig, backend: str = "auto"):
        super().__init__()
        self.config = config
        self.norm = nn.LayerNorm(config.embed_dim)
        self.attn = SS2D(config.embed_dim, config.state_dim, backend=backend)
        self.conv = MultiScaleConvBlock(config.embed_dim, config.conv_kernels)
        self.skip_scale = nn.Parameter(
            torch.full((config.embed_dim,), float(config.skip_scale_init))
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.config.embed_dim:
            raise ValueError(f"expected {self.config.embed_dim} channels, got {x.shape[1]}")
        normed = self.norm(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        return (
            self.skip_scale[None, :, None, None] * x
            + self.attn(normed)
            + self.conv(normed)
        )


class ResidualGroup(nn.Module):
    """A chain of global-local blocks plus a 3x3 conv, wrapped in a residual."""

    def __init__(self, config: BlockConfig, n_blocks: int = 3, backend: str = "auto"):
        super().__init__()
        if n_blocks < 1:
            raise ValueError(f"n_blocks must be >= 1, got {n_blocks}")
        self.blocks = nn.ModuleList(
            GlobalLocalBlock(config, backend=backend) for _ in range(n_blocks)
        )
        self.tail = nn.Conv2d(config.embed_dim, config.embed_dim, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = x
        for block in self.blocks:
            y = block(y)
        return x + self.tail(y)
