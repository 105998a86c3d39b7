"""Dataset manifest: which slice pairs exist, and who goes in which split.

On-disk layout is one directory per patient containing paired slice files
named ``<index>_low.npy`` / ``<index>_high.npy`` (see
:mod:`ctenhance.data.slices` for the file format). The manifest itself is
plain JSON so it can be produced by other tools.

Splitting is two-stage: test patients are held out whole (no slice from a
test patient ever appears in train or val), then the validation set is
drawn at the pair level from the remaining patients. This mirrors the
usual protocol of validating on held-out slices but testing on held-out
patients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .slices import PairedSample

TEST_FRACTION = 0.2
VAL_FRACTION = 0.2


@dataclass(frozen=True)
class ManifestEntry:
    patient_id: str
    slice_index: int
    ldct_path: str
    hdct_path: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            key = (e.patient_id, e.slice_index)
            if key in seen:
                raise ValueError(f"duplicate entry for patient {e.patient_id!r} slice {e.slice_index}")
            seen.add(key)

    @property
    def patient_ids(self) -> tuple[str, ...]:
        return tuple(sorted({e.patient_id for e in self.entries}))

    def to_json(self) -> str:
        payload = {
            "entries": [
                {
                    "patient_id": e.patient_id,
                    "slice_index": e.slice_index,
                    "ldct": e.ldct_path,
                    "hdct": e.hdct_path,
                }
                for e in self.entries
            ]
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        payload = json.loads(text)
        entries = tuple(
            ManifestEntry(
                patient_id=item["patient_id"],
                slice_index=int(item["slice_index"]),
                ldct_path=item["ldct"],
                hdct_path=item["hdct"],
            )
            for item in payload["entries"]
        )
        return cls(entries=entries)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text(manifest.to_json())


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}")
    return DatasetManifest.from_json(path.read_text())


def scan_dataset(root: str | Path) -> DatasetManifest:
    """Build a manifest from the one-directory-per-patient layout."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    entries = []
    for patient_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for low in sorted(patient_dir.glob("*_low.npy")):
            stem = low.name[: -len("_low.npy")]
            high = patient_dir / f"{stem}_high.npy"
            if not high.exists():
                raise FileNotFoundError(f"{low} has no matching {high.name}")
            entries.append(
                ManifestEntry(
                    patient_id=patient_dir.name,
                    slice_index=int(stem),
                    ldct_path=str(low),
                    hdct_path=str(high),
                )
            )
    return DatasetManifest(entries=tuple(entries))


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[ManifestEntry, ...]
    val: tuple[ManifestEntry, ...]
    test: tuple[ManifestEntry, ...]

    @property
    def test_patients(self) -> tuple[str, ...]:
        return tuple(sorted({e.patient_id for e in self.test}))


def split_dataset(
    manifest: DatasetManifest,
    seed: int,
    test_fraction: float = TEST_FRACTION,
    val_fraction: float = VAL_FRACTION,
) -> DatasetSplit:
    """Partition a manifest into train/val/test.

    Test patients are disjoint from train and val patients; within the
    remaining patients, ``val_fraction`` of the pairs (rounded) go to val.
    Deterministic for a fixed seed.
    """
    patients = list(manifest.patient_ids)
    if len(patients) < 3:
        raise ValueError(f"need at least 3 patients to split, got {len(patients)}")
    if not 0 < test_fraction < 1 or not 0 <= val_fraction < 1:
        raise ValueError("fractions must lie in (0, 1)")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(patients))
    n_test = min(max(1, round(test_fraction * len(patients))), len(patients) - 2)
    test_patients = {patients[i] for i in order[:n_test]}

    test = tuple(e for e in manifest.entries if e.patient_id in test_patients)
    trainval = [e for e in manifest.entries if e.patient_id not in test_patients]
    pair_order = rng.permutation(len(trainval))
    n_val = round(val_fraction * len(trainval))
    val_idx = set(pair_order[:n_val].tolist())
    val = tuple(trainval[i] for i in sorted(val_idx))
    train = tuple(trainval[i] for i in range(len(trainval)) if i not in val_idx)
    return DatasetSplit(train=train, val=val, test=test)


def patch_sample(pair: PairedSample, size: int, count: int, seed: int) -> list[PairedSample]:
    """Draw ``count`` co-located square crops from both members of a pair."""
    h, w = pair.ldct.pixels.shape
    if size % 16 != 0 or size <= 0:
        raise ValueError(f"patch size must be a positive multiple of 16, got {size}")
    if size > min(h, w):
        raise ValueError(f"patch size {size} exceeds image extent {(h, w)}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")

    rng = np.random.default_rng(seed)
    patches = []
    for _ in range(count):
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(0, w - size + 1))
        window = (slice(top, top + size), slice(left, left + size))
        low = pair.ldct
        high = pair.hdct
        patches.append(
            PairedSample(
                ldct=type(low)(pixels=low.pixels[window], patient_id=low.patient_id, slice_index=low.slice_index),
                hdct=type(high)(pixels=high.pixels[window], patient_id=high.patient_id, slice_index=high.slice_index),
            )
        )
    return patches
