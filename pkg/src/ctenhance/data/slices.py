"""CT slice containers and Hounsfield-unit helpers.

Slices are stored on disk either as raw ``.npy`` arrays holding HU values
directly, or as 16-bit grayscale PNGs with a JSON sidecar carrying the
rescale slope/intercept needed to map stored integers back to HU.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

HU_MIN = -1024.0
HU_MAX = 3071.0

MIN_SIDE = 16


class SliceFormatError(ValueError):
    """Raised when a slice file decodes to something that is not a valid slice."""


@dataclass(frozen=True)
class CTSlice:
    """A single 2D CT slice in Hounsfield units plus identifying metadata."""

    pixels: np.ndarray
    patient_id: str
    slice_index: int

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise SliceFormatError(f"slice pixels must be 2D, got ndim={px.ndim}")
        h, w = px.shape
        if h < MIN_SIDE or w < MIN_SIDE:
            raise SliceFormatError(f"slice must be at least {MIN_SIDE}x{MIN_SIDE}, got {h}x{w}")
        if not np.all(np.isfinite(px)):
            raise SliceFormatError("slice contains non-finite pixel values")
        if px.min() < HU_MIN or px.max() > HU_MAX:
            raise SliceFormatError(
                f"HU values outside [{HU_MIN:g}, {HU_MAX:g}]: "
                f"range [{px.min():g}, {px.max():g}]"
            )
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class PairedSample:
    """An aligned (low-dose, high-dose) slice pair."""

    ldct: CTSlice
    hdct: CTSlice

    def __post_init__(self):
        if self.ldct.shape != self.hdct.shape:
            raise ValueError(
                f"paired slices must share a shape: {self.ldct.shape} vs {self.hdct.shape}"
            )
        if self.ldct.patient_id != self.hdct.patient_id:
            raise ValueError("paired slices must share a patient_id")
        if self.ldct.slice_index != self.hdct.slice_index:
            raise ValueError("paired slices must share a slice_index")

    @property
    def shape(self) -> tuple[int, int]:
        return self.ldct.shape


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def _read_sidecar(path: Path) -> dict:
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        with open(sidecar) as fh:
            return json.load(fh)
    return {}


def load_slice(path, patient_id: str = "", slice_index: int = 0) -> CTSlice:
    """Load one slice file into a :class:`CTSlice`.

    ``.npy`` files are taken to hold HU values directly unless a sidecar
    declares a rescale. Image files (16-bit PNG etc.) are decoded and
    mapped through ``HU = stored * slope + intercept`` from the sidecar;
    without a sidecar the DICOM-style convention slope=1, intercept=-1024
    is assumed.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"slice file not found: {path}")

    meta = _read_sidecar(path)
    patient_id = patient_id or meta.get("patient_id", "")
    slice_index = meta.get("slice_index", slice_index)

    if path.suffix == ".npy":
        raw = np.load(path)
        slope = float(meta.get("slope", 1.0))
        intercept = float(meta.get("intercept", 0.0))
    else:
        with Image.open(path) as img:
            raw = np.asarray(img)
        slope = float(meta.get("slope", 1.0))
        intercept = float(meta.get("intercept", -1024.0))

    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise SliceFormatError(f"{path}: expected a 2D payload, got shape {raw.shape}")
    hu = raw.astype(np.float64) * slope + intercept
    return CTSlice(pixels=hu, patient_id=patient_id, slice_index=slice_index)


def save_slice(slc: CTSlice, path) -> Path:
    """Write a slice as raw-HU ``.npy`` plus a JSON sidecar with its metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, slc.pixels.astype(np.float32))
    with open(_sidecar_path(path), "w") as fh:
        json.dump(
            {"patient_id": slc.patient_id, "slice_index": slc.slice_index,
             "slope": 1.0, "intercept": 0.0},
            fh,
        )
    return path


def hu_window(pixels, lo: float, hi: float) -> np.ndarray:
    """Map HU values in [lo, hi] linearly onto [0, 1], clamping outside."""
    if lo >= hi:
        raise ValueError(f"window requires lo < hi, got [{lo}, {hi}]")
    px = pixels.pixels if isinstance(pixels, CTSlice) else np.asarray(pixels, dtype=np.float64)
    return np.clip((px - lo) / (hi - lo), 0.0, 1.0)


def normalize_hu(pixels, lo: float = HU_MIN, hi: float = HU_MAX) -> np.ndarray:
    """Map the full HU range onto [0, 1]; the model's working scale."""
    return hu_window(pixels, lo, hi)


def denormalize_hu(values: np.ndarray, lo: float = HU_MIN, hi: float = HU_MAX) -> np.ndarray:
    """Inverse of :func:`normalize_hu`, with clamping back to the HU range."""
    return np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * (hi - lo) + lo
