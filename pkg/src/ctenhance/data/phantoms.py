"""Procedural anatomy-like phantoms for synthetic paired datasets."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .slices import HU_MAX, HU_MIN, CTSlice

AIR_HU = -1000.0
SOFT_TISSUE_HU = 40.0


def synthetic_body_slice(
    size: int = 128,
    seed: int = 0,
    patient_id: str = "synthetic",
    slice_index: int = 0,
) -> CTSlice:
    """An elliptical soft-tissue body on air, with random circular inserts.

    Inserts span lung-like to bone-like densities and a low-frequency
    texture field keeps tissue from being perfectly flat, so projections
    and metrics see realistic contrast. Deterministic per seed.
    """
    if size < 32:
        raise ValueError(f"size must be >= 32, got {size}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = (size - 1) / 2.0, (size - 1) / 2.0
    ry = size * rng.uniform(0.32, 0.4)
    rx = size * rng.uniform(0.36, 0.44)
    body = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0

    hu = np.full((size, size), AIR_HU)
    texture = gaussian_filter(rng.normal(0.0, 1.0, (size, size)), size / 16.0)
    peak = np.abs(texture).max()
    if peak > 0:
        texture *= 30.0 / peak
    hu[body] = SOFT_TISSUE_HU + texture[body]

    for _ in range(int(rng.integers(2, 6))):
        r = size * rng.uniform(0.04, 0.1)
        angle = rng.uniform(0, 2 * np.pi)
        rad = rng.uniform(0, 0.6)
        icy = cy + rad * ry * np.sin(angle)
        icx = cx + rad * rx * np.cos(angle)
        insert = (xx - icx) ** 2 + (yy - icy) ** 2 <= r * r
        hu[insert & body] = rng.uniform(-850.0, 900.0)

    return CTSlice(
        pixels=np.clip(hu, HU_MIN, HU_MAX),
        patient_id=patient_id,
        slice_index=slice_index,
    )
