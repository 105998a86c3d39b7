"""Deep-feature perceptual metrics: LPIPS-style distance and DISTS-style similarity.

Both run on the shared frozen backbone. Learned calibration weights are
loadable artifacts; without them, taps are combined with unit weights and
callers should label results uncalibrated.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from ..perception.backbone import BAND_CHANNELS, FeatureBackbone

_EPS = 1e-10
_C_STRUCT = 1e-6
_C_TEXTURE = 1e-6


def _to_tensor(x: np.ndarray) -> torch.Tensor:
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {arr.shape}")
    return torch.from_numpy(arr)


def _check_shapes(x: np.ndarray, y: np.ndarray) -> None:
    if np.asarray(x).shape != np.asarray(y).shape:
        raise ValueError(f"shape mismatch: {np.asarray(x).shape} vs {np.asarray(y).shape}")


def load_calibration(path: str | Path) -> dict[str, np.ndarray]:
    """Load per-band channel weights saved as an ``.npz`` of band -> vector."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no calibration file at {path}")
    data = np.load(path)
    weights = {band: np.asarray(data[band], dtype=np.float64) for band in data.files}
    for band, w in weights.items():
        if band not in BAND_CHANNELS:
            raise ValueError(f"unknown band {band!r} in calibration file")
        if w.shape != (BAND_CHANNELS[band],) or (w < 0).any():
            raise ValueError(f"calibration for {band!r} must be {BAND_CHANNELS[band]} non-negative weights")
    return weights


def _unit_normalize(feat: torch.Tensor) -> torch.Tensor:
    norm = torch.sqrt(torch.sum(feat * feat, dim=1, keepdim=True) + _EPS)
    return feat / norm


def perceptual_distance(
    x: np.ndarray,
    y: np.ndarray,
    backbone: FeatureBackbone,
    calibration: dict[str, np.ndarray] | None = None,
) -> float:
    """Channel-normalized squared feature distance summed over the tap bands.

    Zero for identical inputs, symmetric, non-negative; lower is better.
    """
    _check_shapes(x, y)
    with torch.no_grad():
        fx = backbone(_to_tensor(x))
        fy = backbone(_to_tensor(y))
        total = 0.0
        for band in fx:
            diff = (_unit_normalize(fx[band]) - _unit_normalize(fy[band])) ** 2
            if calibration is not None:
                if band not in calibration:
                    raise ValueError(f"calibration is missing band {band!r}")
                w = torch.as_tensor(calibration[band], dtype=diff.dtype).view(1, -1, 1, 1)
                diff = diff * w
            total += float(diff.sum(dim=1).mean())
    return total


def dists(x: np.ndarray, y: np.ndarray, backbone: FeatureBackbone) -> float:
    """Structure/texture similarity in (0, 1]; 1.0 means identical.

    Per band and channel, a structure term compares spatial feature means
    and a texture term compares variances/covariance; the per-band averages
    multiply together. Negative covariance counts as zero texture
    similarity, and the product is floored to stay positive.
    """
    _check_shapes(x, y)
    with torch.no_grad():
        fx = backbone(_to_tensor(x))
        fy = backbone(_to_tensor(y))
        sim = 1.0
        for band in fx:
            a = fx[band].flatten(2)
            b = fy[band].flatten(2)
            mu_a = a.mean(dim=2)
            mu_b = b.mean(dim=2)
            var_a = a.var(dim=2, unbiased=False)
            var_b = b.var(dim=2, unbiased=False)
            cov = ((a - mu_a[..., None]) * (b - mu_b[..., None])).mean(dim=2)
            structure = (2 * mu_a * mu_b + _C_STRUCT) / (mu_a**2 + mu_b**2 + _C_STRUCT)
            texture = (2 * cov + _C_TEXTURE) / (var_a + var_b + _C_TEXTURE)
            texture = texture.clamp(min=0.0, max=1.0)
            sim *= float((structure * texture).mean())
    return max(sim, 1e-12)
