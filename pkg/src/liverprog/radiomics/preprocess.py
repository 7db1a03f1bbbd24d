"""Preprocessing chain shared by all feature classes.

Images are resampled to 2 mm isotropic with a cubic B-spline (masks with
nearest neighbor), intensities inside the roi are clipped to mean +/- 3 std,
z-scored, scaled by 100, and discretized with a fixed bin width of 5 starting
at the roi minimum. Feature extraction then only ever sees the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..volume import (
    Mask3D,
    Volume3D,
    clip_sigma_zscore,
    percentile_linear,
    resample,
    resample_mask,
)

TARGET_SPACING = (2.0, 2.0, 2.0)
BIN_WIDTH = 5.0


class RoiVanishedError(ValueError):
    """The roi contains no voxels after resampling."""


@dataclass(frozen=True)
class TumorInstance:
    """One lesion: its mask on the source grid plus size summaries."""

    patient_id: str
    phase: str
    instance_id: int
    mask: np.ndarray  # boolean, source-grid dims
    diameter_mm: float
    volume_mm3: float

    def __post_init__(self):
        if not self.mask.any():
            raise ValueError("instance mask is empty")


@dataclass(frozen=True)
class DiscretizedVolume:
    """Preprocessed intensities and their gray levels on the working grid.

    ``levels`` holds integers in [1, num_levels] inside the roi and 0
    elsewhere; ``intensities`` holds the clipped, z-scored, scaled values the
    levels were binned from.
    """

    intensities: np.ndarray
    levels: np.ndarray
    roi: np.ndarray
    num_levels: int
    bin_width: float
    spacing: tuple[float, float, float]

    def __post_init__(self):
        inside = self.levels[self.roi]
        if inside.size == 0:
            raise RoiVanishedError("roi is empty")
        if inside.min() < 1 or inside.max() > self.num_levels:
            raise ValueError("levels outside [1, num_levels]")
        if np.any(self.levels[~self.roi] != 0):
            raise ValueError("levels assigned outside the roi")

    @property
    def roi_values(self) -> np.ndarray:
        return self.intensities[self.roi]

    @property
    def roi_levels(self) -> np.ndarray:
        return self.levels[self.roi]


def discretize(intensities: np.ndarray, roi: np.ndarray, bin_width: float = BIN_WIDTH,
               spacing: tuple[float, float, float] = TARGET_SPACING) -> DiscretizedVolume:
    """Bin roi intensities: level = floor((x - roi min) / width) + 1."""
    roi = np.asarray(roi, dtype=bool)
    if not roi.any():
        raise RoiVanishedError("roi is empty")
    vals = intensities[roi]
    levels = np.zeros(intensities.shape, dtype=np.int32)
    levels[roi] = np.floor((vals - vals.min()) / bin_width).astype(np.int32) + 1
    return DiscretizedVolume(
        intensities=intensities,
        levels=levels,
        roi=roi,
        num_levels=int(levels.max()),
        bin_width=bin_width,
        spacing=spacing,
    )


def _crop_box(mask: np.ndarray, margin: int) -> tuple[slice, slice, slice]:
    idx = np.nonzero(mask)
    return tuple(
        slice(max(int(ax.min()) - margin, 0), min(int(ax.max()) + margin + 1, n))
        for ax, n in zip(idx, mask.shape)
    )


def preprocess_for_radiomics(
    v: Volume3D,
    roi: np.ndarray,
    target_spacing: tuple[float, float, float] = TARGET_SPACING,
    bin_width: float = BIN_WIDTH,
    crop_margin: int = 4,
) -> DiscretizedVolume:
    """Resample, clip, normalize and discretize one roi.

    The volume is cropped to the roi bounding box (plus margin) before
    resampling, which keeps extraction independent of where the roi sits in
    the scan and cheap for small lesions.
    """
    roi = np.asarray(roi, dtype=bool)
    if not roi.any():
        raise RoiVanishedError("roi is empty")
    box = _crop_box(roi, crop_margin)
    sub = Volume3D(v.voxels[box], v.spacing, v.origin)
    sub_roi = Mask3D(roi[box].astype(np.uint8), v.spacing, v.origin)

    image = resample(sub, target_spacing, order="cubic-bspline")
    mask = resample_mask(sub_roi, target_spacing)
    roi_r = mask.labels > 0
    if not roi_r.any():
        raise RoiVanishedError("roi vanished during resampling")

    normalized = clip_sigma_zscore(image, roi_r, n_sigma=3.0, scale=100.0)
    return discretize(normalized.voxels, roi_r, bin_width, target_spacing)


def exclude_small(
    instances: list[TumorInstance], train_diameters
) -> list[TumorInstance]:
    """Drop instances at or below the 1st percentile of training diameters."""
    diameters = np.asarray(train_diameters, dtype=np.float64)
    if diameters.size == 0:
        raise ValueError("training diameter list is empty")
    threshold = percentile_linear(diameters, 1.0)
    return [t for t in instances if t.diameter_mm > threshold]
