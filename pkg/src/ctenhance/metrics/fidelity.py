"""Full-reference fidelity metrics: PSNR, SSIM, and pixel-domain VIF."""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
VIF_SCALES = 4
VIF_SIGMA_NSQ = 2.0


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 2:
        raise ValueError(f"expected 2D images, got shape {x.shape}")
    return x, y


def psnr(x: np.ndarray, y: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 so reports stay finite."""
    x, y = _check_pair(x, y)
    if not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return fftconvolve(img, kernel, mode="valid")


def ssim(x: np.ndarray, y: np.ndarray, data_range: float = 1.0) -> float:
    """Mean structural similarity with the standard 11x11 Gaussian window.

    Window statistics use only fully-valid positions, so images must be at
    least 11 pixels on each side.
    """
    x, y = _check_pair(x, y)
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    if not data_range > 0:
        raise ValueError(f"data_range must be positive, got {data_range}")

    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    mu_x = _filter_valid(x, kernel)
    mu_y = _filter_valid(y, kernel)
    var_x = _filter_valid(x * x, kernel) - mu_x * mu_x
    var_y = _filter_valid(y * y, kernel) - mu_y * mu_y
    cov = _filter_valid(x * y, kernel) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def vif_p(x: np.ndarray, y: np.ndarray) -> float:
    """Pixel-domain multiscale visual information fidelity.

    ``x`` is the reference. Ratio of information the distorted image carries
    about the source to the information in the reference itself, under a
    local Gaussian model; 1.0 for identical images and for a zero-variance
    (degenerate) reference.
    """
    x, y = _check_pair(x, y)
    eps = 1e-10
    num = 0.0
    den = 0.0
    ref, dist = x, y
    for scale in range(1, VIF_SCALES + 1):
        size = 2 ** (VIF_SCALES - scale + 1) + 1
        kernel = _gaussian_kernel(size, size / 5.0)
        if scale > 1:
            ref = _filter_valid(ref, kernel)[::2, ::2]
            dist = _filter_valid(dist, kernel)[::2, ::2]
        if min(ref.shape) < size:
            break

        mu1 = _filter_valid(ref, kernel)
        mu2 = _filter_valid(dist, kernel)
        var1 = np.clip(_filter_valid(ref * ref, kernel) - mu1 * mu1, 0.0, None)
        var2 = np.clip(_filter_valid(dist * dist, kernel) - mu2 * mu2, 0.0, None)
        cov = _filter_valid(ref * dist, kernel) - mu1 * mu2

        g = cov / (var1 + eps)
        sv_sq = var2 - g * cov

        g = np.where(var1 < eps, 0.0, g)
        sv_sq = np.where(var1 < eps, var2, sv_sq)
        var1 = np.where(var1 < eps, 0.0, var1)
        sv_sq = np.where(var2 < eps, 0.0, sv_sq)
        g = np.where(var2 < eps, 0.0, g)
        sv_sq = np.where(g < 0.0, var2, sv_sq)
        g = np.clip(g, 0.0, None)
        sv_sq = np.clip(sv_sq, eps, None)

        num += float(np.sum(np.log10(1.0 + g * g * var1 / (sv_sq + VIF_SIGMA_NSQ))))
        den += float(np.sum(np.log10(1.0 + var1 / VIF_SIGMA_NSQ)))
    if den == 0.0:
        return 1.0
    return num / den
