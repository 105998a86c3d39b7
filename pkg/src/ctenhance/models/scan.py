"""Selective state-space scan over 1D sequences.

The recurrence, per batch item and channel, with an N-dimensional hidden
state::

    h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * x_t
    y_t = C_t . h_t + D * x_t

A and the skip D are per-channel parameters; delta, B, and C are produced
from the input (that is what makes the scan selective). A reference
implementation in plain torch ops defines correctness; a numba kernel with
a hand-derived backward provides the speed for training, and ``backend=
"auto"`` picks between them by sequence length.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
import torch

# The default TBB layer is version-gated and warns on this platform; OpenMP
# behaves identically for these kernels.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
from numba import njit, prange

DELTA_FLOOR = 1e-6
_AUTO_NUMBA_MIN_LEN = 256


@dataclass(frozen=True)
class SsmParams:
    """Per-call scan parameters.

    A: (channels, state) with strictly negative entries, so exp(delta*A)
       stays in (0, 1) and the recurrence cannot blow up.
    B, C: (batch, state, length), input-dependent projections.
    D: (channels,) skip coefficients, or None for no skip.
    delta: (batch, channels, length), strictly positive step sizes.
    """

    A: torch.Tensor
    B: torch.Tensor
    C: torch.Tensor
    delta: torch.Tensor
    D: torch.Tensor | None = None

    def __post_init__(self):
        if self.A.ndim != 2:
            raise ValueError(f"A must be (channels, state), got {tuple(self.A.shape)}")
        channels, state = self.A.shape
        if self.B.ndim != 3 or self.B.shape[1] != state:
            raise ValueError(f"B must be (batch, {state}, length), got {tuple(self.B.shape)}")
        if self.C.shape != self.B.shape:
            raise ValueError(f"C must match B, got {tuple(self.C.shape)} vs {tuple(self.B.shape)}")
        batch, _, length = self.B.shape
        if self.delta.shape != (batch, channels, length):
            raise ValueError(
                f"delta must be (batch, channels, length) = {(batch, channels, length)}, "
                f"got {tuple(self.delta.shape)}"
            )
        if self.D is not None and self.D.shape != (channels,):
            raise ValueError(f"D must be (channels,), got {tuple(self.D.shape)}")
        if not torch.all(self.delta > 0):
            raise ValueError("delta must be strictly positive")


def _scan_reference(
    x: torch.Tensor,
    delta: torch.Tensor,
    A: torch.Tensor,
    B: torch.Tensor,
    C: torch.Tensor,
) -> torch.Tensor:
    """Step-by-step recurrence in plain torch ops; autograd-friendly."""
    batch, channels, length = x.shape
    state = A.shape[1]
    h = x.new_zeros(batch, channels, state)
    ys = []
    for t in range(length):
        a = torch.exp(delta[:, :, t, None] * A)
        h = a * h + delta[:, :, t, None] * B[:, None, :, t] * x[:, :, t, None]
        ys.append(torch.sum(h * C[:, None, :, t], dim=-1))
    return torch.stack(ys, dim=-1)


@njit(parallel=True, cache=True)
def _scan_fwd_kernel(x, delta, A, Bm, Cm, y):  # pragma: no cover - compiled
    batch, channels, length = x.shape
    state = A.shape[1]
    for r in prange(batch * channels):
        b = r // channels
        d = r % channels
        h = np.zeros(state)
        for t in range(length):
            dt = delta[b, d, t]
            xt = x[b, d, t]
            yt = 0.0
            for n in range(state):
                a = math.exp(dt * A[d, n])
                h[n] = a * h[n] + dt * Bm[b, n, t] * xt
                yt += Cm[b, n, t] * h[n]
            y[b, d, t] = yt


@njit(parallel=True, cache=True)
def _scan_bwd_kernel(x, delta, A, Bm, Cm, dy, dx, ddelta, dA_part, dB, dC):  # pragma: no cover
    batch, channels, length = x.shape
    state = A.shape[1]
    for b in prange(batch):
        hbuf = np.zeros((length, state))
        dh = np.zeros(state)
        for d in range(channels):
            for t in range(length):
                dt = delta[b, d, t]
                xt = x[b, d, t]
                for n in range(state):
                    prev = hbuf[t - 1, n] if t > 0 else 0.0
                    hbuf[t, n] = math.exp(dt * A[d, n]) * prev + dt * Bm[b, n, t] * xt
            for n in range(state):
                dh[n] = 0.0
            for t in range(length - 1, -1, -1):
                dt = delta[b, d, t]
                xt = x[b, d, t]
                dyt = dy[b, d, t]
                dxt = 0.0
                ddt = 0.0
                for n in range(state):
                    prev = hbuf[t - 1, n] if t > 0 else 0.0
                    a = math.exp(dt * A[d, n])
                    dC[b, n, t] += dyt * hbuf[t, n]
                    dh_n = dh[n] + Cm[b, n, t] * dyt
                    dA_part[b, d, n] += dh_n * dt * a * prev
                    ddt += dh_n * (A[d, n] * a * prev + Bm[b, n, t] * xt)
                    dB[b, n, t] += dh_n * dt * xt
                    dxt += dh_n * dt * Bm[b, n, t]
                    dh[n] = dh_n * a
                dx[b, d, t] = dxt
                ddelta[b, d, t] = ddt


class _NumbaScan(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, delta, A, B, C):
        arrays = [t.detach().numpy().astype(np.float64) for t in (x, delta, A, B, C)]
        y = np.empty_like(arrays[0])
        _scan_fwd_kernel(*arrays, y)
        ctx.arrays = arrays
        ctx.dtypes = [t.dtype for t in (x, delta, A, B, C)]
        return torch.from_numpy(y).to(x.dtype)

    @staticmethod
    def backward(ctx, dy):
        x, delta, A, B, C = ctx.arrays
        dy64 = dy.detach().numpy().astype(np.float64)
        dx = np.zeros_like(x)
        ddelta = np.zeros_like(delta)
        dA_part = np.zeros((x.shape[0], x.shape[1], A.shape[1]))
        dB = np.zeros_like(B)
        dC = np.zeros_like(C)
        _scan_bwd_kernel(x, delta, A, B, C, dy64, dx, ddelta, dA_part, dB, dC)
        grads = (dx, ddelta, dA_part.sum(axis=0), dB, dC)
        return tuple(torch.from_numpy(g).to(dt) for g, dt in zip(grads, ctx.dtypes))


def selective_scan_1d(
    x: torch.Tensor,
    params: SsmParams,
    backend: str = "auto",
) -> torch.Tensor:
    """Run the selective scan along the last axis of ``x`` (batch, channels, length).

    Both backends implement the same recurrence; they agree to floating-point
    reassociation error. The numba path pays a per-call conversion cost, so
    ``auto`` only uses it for longer sequences.
    """
    if x.ndim != 3:
        raise ValueError(f"x must be (batch, channels, length), got {tuple(x.shape)}")
    if x.shape != params.delta.shape:
        raise ValueError(f"x shape {tuple(x.shape)} must match delta {tuple(params.delta.shape)}")
    if backend not in ("auto", "numba", "reference"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "auto":
        backend = "numba" if x.shape[-1] >= _AUTO_NUMBA_MIN_LEN else "reference"

    if backend == "numba":
        xc = x.contiguous()
        y = _NumbaScan.apply(xc, params.delta.contiguous(), params.A.contiguous(),
                             params.B.contiguous(), params.C.contiguous())
    else:
        y = _scan_reference(x, params.delta, params.A, params.B, params.C)
    if params.D is not None:
        y = y + params.D[None, :, None] * x
    return y
