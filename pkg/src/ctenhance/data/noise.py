"""Projection-domain noise injection for low-dose acquisition simulation.

Counts follow a Poisson-Gaussian model: quantum noise on the transmitted
photon count plus additive electronic readout noise. Re-log-transforming
the noisy counts yields noisy line integrals; a count floor keeps the log
finite when noise drives a bin to zero or below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .projection import Sinogram, fbp_reconstruct, hu_to_attenuation, attenuation_to_hu, radon_forward
from .slices import HU_MAX, HU_MIN, CTSlice, PairedSample

COUNT_FLOOR = 0.1


@dataclass(frozen=True)
class NoiseModelConfig:
    """Acquisition noise parameters.

    incident_photons: unattenuated photons per detector bin (I0); lower
        values mean lower dose and noisier projections.
    electronic_sigma: standard deviation of additive readout noise, in
        count units.
    seed: RNG seed so a given acquisition is reproducible.
    """

    incident_photons: float = 2.0e3
    electronic_sigma: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not self.incident_photons > 0:
            raise ValueError(f"incident_photons must be positive, got {self.incident_photons}")
        if self.electronic_sigma < 0:
            raise ValueError(f"electronic_sigma must be >= 0, got {self.electronic_sigma}")


def inject_ld_noise(sino: Sinogram, config: NoiseModelConfig) -> Sinogram:
    """Return a noisy copy of ``sino`` under the Poisson-Gaussian count model."""
    p = sino.values
    if p.min() < 0:
        raise ValueError("line integrals must be non-negative")
    rng = np.random.default_rng(config.seed)
    expected = config.incident_photons * np.exp(-p)
    counts = rng.poisson(expected).astype(np.float64)
    if config.electronic_sigma > 0:
        counts += rng.normal(0.0, config.electronic_sigma, size=counts.shape)
    counts = np.maximum(counts, COUNT_FLOOR)
    noisy = -np.log(counts / config.incident_photons)
    return Sinogram(values=noisy, angles=sino.angles.copy())


def simulate_low_dose(
    ct: CTSlice,
    config: NoiseModelConfig,
    n_angles: int = 180,
) -> PairedSample:
    """Degrade a normal-dose slice into a (low-dose, normal-dose) pair.

    Forward-projects the slice's attenuation map, injects count noise,
    and reconstructs with filtered backprojection. The reconstruction is
    clipped back to the valid HU range.
    """
    mu = hu_to_attenuation(ct.pixels)
    sino = radon_forward(mu, n_angles)
    noisy = inject_ld_noise(sino, config)
    mu_hat = fbp_reconstruct(noisy, ct.pixels.shape)
    hu_hat = np.clip(attenuation_to_hu(mu_hat), HU_MIN, HU_MAX)
    low = CTSlice(pixels=hu_hat, patient_id=ct.patient_id, slice_index=ct.slice_index)
    return PairedSample(ldct=low, hdct=ct)
