"""Data layer: slice IO, projection simulation, noise, manifests, splits."""

from .manifest import (
    DatasetManifest,
    DatasetSplit,
    ManifestEntry,
    load_manifest,
    patch_sample,
    save_manifest,
    scan_dataset,
    split_dataset,
)
from .noise import COUNT_FLOOR, NoiseModelConfig, inject_ld_noise, simulate_low_dose
from .phantoms import synthetic_body_slice
from .projection import (
    MU_WATER,
    Sinogram,
    attenuation_to_hu,
    detector_count,
    fbp_reconstruct,
    hu_to_attenuation,
    projection_angles,
    radon_forward,
)
from .slices import (
    HU_MAX,
    HU_MIN,
    CTSlice,
    PairedSample,
    SliceFormatError,
    denormalize_hu,
    hu_window,
    load_slice,
    normalize_hu,
    save_slice,
)

__all__ = [
    "CTSlice",
    "PairedSample",
    "SliceFormatError",
    "Sinogram",
    "NoiseModelConfig",
    "DatasetManifest",
    "DatasetSplit",
    "ManifestEntry",
    "HU_MIN",
    "HU_MAX",
    "MU_WATER",
    "COUNT_FLOOR",
    "load_slice",
    "save_slice",
    "hu_window",
    "normalize_hu",
    "denormalize_hu",
    "hu_to_attenuation",
    "attenuation_to_hu",
    "detector_count",
    "projection_angles",
    "radon_forward",
    "fbp_reconstruct",
    "inject_ld_noise",
    "simulate_low_dose",
    "scan_dataset",
    "load_manifest",
    "save_manifest",
    "split_dataset",
    "patch_sample",
    "synthetic_body_slice",
]
