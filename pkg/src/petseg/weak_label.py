"""Weak ground-truth generation from co-registered PET volumes.

A binary mask is derived per slice by thresholding the PET stack at a fixed
fraction of its volume-wide maximum intensity (one threshold per dataset).
Pixels strictly above the threshold are foreground.  The module also selects
slices containing enough foreground and splits patients into train/test sets
by a seeded shuffle, always at patient granularity.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .imaging import BinaryMask2D, ScalarImage2D, Volume3D


@dataclass(frozen=True)
class ThresholdConfig:
    """Fraction of the volume maximum used as the foreground threshold."""

    fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError(f"fraction must lie in (0, 1), got {self.fraction}")


@dataclass(frozen=True, eq=False)
class PatientDataset:
    """Co-registered CT and PET stacks for one patient.

    Both volumes must already live on the same voxel grid; resampling and
    registration are outside this package's scope.
    """

    patient_id: str
    ct: Volume3D
    pet: Volume3D

    def __post_init__(self):
        if self.ct.values.shape != self.pet.values.shape:
            raise ValueError(
                f"{self.patient_id}: CT {self.ct.values.shape} and PET "
                f"{self.pet.values.shape} grids do not match"
            )


@dataclass(frozen=True, eq=False)
class LabeledSlice:
    """One CT slice paired with its weak ground-truth mask."""

    patient_id: str
    slice_index: int
    ct: ScalarImage2D
    mask: BinaryMask2D

    def __post_init__(self):
        if (self.ct.height, self.ct.width) != (self.mask.height, self.mask.width):
            raise ValueError("CT slice and mask dimensions do not match")


def compute_threshold(pet: Volume3D, cfg: ThresholdConfig = ThresholdConfig()) -> float:
    """Threshold for one dataset: fraction times the volume-wide maximum."""
    if pet.values.size == 0:
        raise ValueError("empty volume")
    peak = float(pet.values.max())
    if peak <= 0.0:
        raise ValueError(f"volume has no positive activity (max = {peak})")
    return cfg.fraction * peak


def binarize(pet: Volume3D, threshold: float) -> list[BinaryMask2D]:
    """Per-slice masks: foreground where the voxel is strictly above threshold."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    fg = pet.values > threshold
    return [BinaryMask2D(fg[k].astype(np.uint8)) for k in range(pet.depth)]


def select_foreground_slices(masks: Sequence[BinaryMask2D], min_fg: int = 1) -> list[int]:
    """Indices of masks with at least min_fg foreground pixels, ascending."""
    if min_fg < 1:
        raise ValueError(f"min_fg must be at least 1, got {min_fg}")
    return [k for k, m in enumerate(masks) if m.foreground_count() >= min_fg]


def patient_split(
    ids: Sequence[str], train_count: int, seed: int
) -> tuple[list[str], list[str]]:
    """Seeded patient-level split into (train, test) id lists.

    The split is disjoint, covers all ids, and is reproducible for a given
    seed.  Slices of one patient never straddle the two sets.
    """
    if not 0 < train_count < len(ids):
        raise ValueError(
            f"train_count must lie strictly between 0 and {len(ids)}, got {train_count}"
        )
    if len(set(ids)) != len(ids):
        raise ValueError("patient ids must be unique")
    shuffled = list(ids)
    random.Random(seed).shuffle(shuffled)
    return shuffled[:train_count], shuffled[train_count:]
