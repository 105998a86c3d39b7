"""Parallel-beam forward projection and filtered backprojection.

Geometry: pixel centers sit at ``x = col - (W-1)/2``, ``y = row - (H-1)/2``
in pixel-spacing units (1 mm). The ray for (angle, offset) is
``(x, y) = s*(cos a, sin a) + t*(-sin a, cos a)``, so at angle 0 the ray at
offset ``s`` runs straight down the image column at ``x = s``. Detector
offsets are the integers ``-T .. T`` with ``2T+1`` bins covering the image
diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

MU_WATER = 0.0195  # linear attenuation of water, mm^-1


@dataclass(frozen=True)
class Sinogram:
    """Line integrals of attenuation, one row per acquisition angle."""

    values: np.ndarray  # (n_angles, n_detectors)
    angles: np.ndarray = field(default=None)  # radians

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1:
            raise ValueError(f"sinogram must be (n_angles >= 1, n_detectors), got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("sinogram contains non-finite values")
        angles = np.asarray(self.angles, dtype=np.float64)
        if angles.shape != (vals.shape[0],):
            raise ValueError("angles must list one value per sinogram row")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "angles", angles)

    @property
    def n_angles(self) -> int:
        return self.values.shape[0]

    @property
    def n_detectors(self) -> int:
        return self.values.shape[1]


def hu_to_attenuation(hu: np.ndarray) -> np.ndarray:
    """Affine HU -> linear attenuation (mm^-1), clamped to be non-negative."""
    mu = MU_WATER * (1.0 + np.asarray(hu, dtype=np.float64) / 1000.0)
    return np.clip(mu, 0.0, None)


def attenuation_to_hu(mu: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hu_to_attenuation` (without the clamp)."""
    return (np.asarray(mu, dtype=np.float64) / MU_WATER - 1.0) * 1000.0


def detector_count(shape: tuple[int, int]) -> int:
    """Number of detector bins: smallest odd count covering the image diagonal."""
    diag = float(np.hypot(*shape))
    return 2 * int(np.ceil(diag / 2.0)) + 1


def projection_angles(n_angles: int) -> np.ndarray:
    return np.arange(n_angles, dtype=np.float64) * np.pi / n_angles


def radon_forward(image: np.ndarray, n_angles: int, step: float = 1.0) -> Sinogram:
    """Forward-project a non-negative attenuation image over [0, pi).

    Each sinogram entry is the discretized line integral along its ray,
    sampled every ``step`` pixel lengths with bilinear interpolation
    (zero outside the image).
    """
    if n_angles < 1:
        raise ValueError(f"n_angles must be >= 1, got {n_angles}")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")

    h, w = img.shape
    n_det = detector_count((h, w))
    half = (n_det - 1) / 2.0
    offsets = np.arange(n_det, dtype=np.float64) - half
    t = np.arange(-half, half + step / 2.0, step)
    angles = projection_angles(n_angles)

    sino = np.empty((n_angles, n_det), dtype=np.float64)
    for m, a in enumerate(angles):
        cos_a, sin_a = np.cos(a), np.sin(a)
        x = offsets[:, None] * cos_a - t[None, :] * sin_a
        y = offsets[:, None] * sin_a + t[None, :] * cos_a
        rows = y + (h - 1) / 2.0
        cols = x + (w - 1) / 2.0
        samples = map_coordinates(img, [rows, cols], order=1, mode="constant", cval=0.0)
        sino[m] = samples.sum(axis=1) * step
    return Sinogram(values=sino, angles=angles)


def _ramp_filter(n_fft: int) -> np.ndarray:
    # Band-limited ramp built from its spatial kernel (Kak & Slaney eq. 61)
    # rather than |f| directly, so the DC term stays correct.
    kernel = np.zeros(n_fft)
    kernel[0] = 0.25
    odd = np.arange(1, n_fft // 2 + 1, 2)
    kernel[odd] = -1.0 / (np.pi * odd) ** 2
    kernel[-odd] = -1.0 / (np.pi * odd) ** 2
    return 2.0 * np.real(np.fft.fft(kernel))


def fbp_reconstruct(sino: Sinogram, out_shape: tuple[int, int]) -> np.ndarray:
    """Ramp-filtered backprojection onto an ``out_shape`` attenuation image."""
    h, w = out_shape
    if sino.n_detectors != detector_count((h, w)):
        raise ValueError(
            f"sinogram has {sino.n_detectors} detector bins but shape {out_shape} "
            f"requires {detector_count((h, w))}"
        )
    n_det = sino.n_detectors
    n_fft = 1 << int(np.ceil(np.log2(max(64, 2 * n_det))))
    filt = _ramp_filter(n_fft)
    filtered = np.real(np.fft.ifft(np.fft.fft(sino.values, n=n_fft, axis=1) * filt, axis=1))
    filtered = filtered[:, :n_det]

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    xs -= (w - 1) / 2.0
    ys -= (h - 1) / 2.0
    half = (n_det - 1) / 2.0

    recon = np.zeros((h, w), dtype=np.float64)
    for m, a in enumerate(sino.angles):
        pos = xs * np.cos(a) + ys * np.sin(a) + half
        i0 = np.floor(pos).astype(np.int64)
        frac = pos - i0
        valid0 = (i0 >= 0) & (i0 < n_det)
        valid1 = (i0 + 1 >= 0) & (i0 + 1 < n_det)
        row = filtered[m]
        v0 = np.where(valid0, row[np.clip(i0, 0, n_det - 1)], 0.0)
        v1 = np.where(valid1, row[np.clip(i0 + 1, 0, n_det - 1)], 0.0)
        recon += (1.0 - frac) * v0 + frac * v1
    return recon * np.pi / (2.0 * sino.n_angles)
