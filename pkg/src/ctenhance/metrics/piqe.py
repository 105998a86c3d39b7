"""Perception-based no-reference quality score over 16x16 blocks.

The image is normalized to mean-subtracted contrast-normalized (MSCN)
coefficients. Blocks with enough spatial activity are checked for two kinds
of distortion: noticeable blockiness (a flat segment along a block edge) and
Gaussian-noise-like behavior (center vs surround deviation). Distorted
blocks contribute a per-block score; lower totals mean cleaner images.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import gaussian_filter

BLOCK_SIZE = 16
ACTIVITY_THRESHOLD = 0.1
SEGMENT_THRESHOLD = 0.1
SEGMENT_LENGTH = 6
POOLING_C = 1.0


def _mscn(image: np.ndarray) -> np.ndarray:
    # 7x7 Gaussian (sigma 7/6) local mean/deviation with replicated borders.
    sigma = 7.0 / 6.0
    truncate = 3.0 / sigma
    mu = gaussian_filter(image, sigma=sigma, truncate=truncate, mode="nearest")
    sq = gaussian_filter(image * image, sigma=sigma, truncate=truncate, mode="nearest")
    dev = np.sqrt(np.abs(sq - mu * mu))
    return (image - mu) / (dev + 1.0)


def _segment_flat(block: np.ndarray) -> bool:
    edges = np.stack([block[0, :], block[-1, :], block[:, 0], block[:, -1]])
    segments = sliding_window_view(edges, SEGMENT_LENGTH, axis=1)
    return bool(np.any(segments.std(axis=-1, ddof=1) < SEGMENT_THRESHOLD))


def _noise_like(block: np.ndarray, block_dev: float) -> bool:
    c1 = BLOCK_SIZE // 2 - 1
    center = block[:, c1:c1 + 2].ravel()
    surround = np.delete(block, [c1, c1 + 1], axis=1).ravel()
    surround_dev = surround.std(ddof=1)
    ratio = 0.0 if surround_dev == 0 else center.std(ddof=1) / surround_dev
    if np.isnan(ratio):
        ratio = 0.0
    beta = abs(block_dev - ratio) / max(block_dev, ratio)
    return block_dev > 2.0 * beta


def piqe(image: np.ndarray) -> float:
    """No-reference quality score in [0, 100]; lower is better.

    Pooling averages the distorted-block scores over the spatially active
    blocks (with a +1 regularizer on both sides), then scales to 0-100. A
    homogeneous image has no active blocks and scores 100.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    h, w = img.shape
    if h < BLOCK_SIZE or w < BLOCK_SIZE:
        raise ValueError(f"image {img.shape} smaller than one {BLOCK_SIZE}x{BLOCK_SIZE} block")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")

    peak = img.max()
    if peak > 0:
        img = np.round(255.0 * (img / peak))
    mscn = _mscn(img)

    n_active = 0
    total = 0.0
    for i in range(0, h - BLOCK_SIZE + 1, BLOCK_SIZE):
        for j in range(0, w - BLOCK_SIZE + 1, BLOCK_SIZE):
            block = mscn[i:i + BLOCK_SIZE, j:j + BLOCK_SIZE]
            block_var = block.var(ddof=1)
            if block_var <= ACTIVITY_THRESHOLD:
                continue
            n_active += 1
            if _segment_flat(block):
                total += 1.0 - block_var
            if _noise_like(block, float(np.sqrt(block_var))):
                total += block_var
    raw = 100.0 * (total + POOLING_C) / (n_active + POOLING_C)
    return float(np.clip(raw, 0.0, 100.0))


def block_count(shape: tuple[int, int]) -> int:
    """Number of whole blocks the score considers for an image shape."""
    return (shape[0] // BLOCK_SIZE) * (shape[1] // BLOCK_SIZE)
