"""Volumetric data model and the geometric / intensity operations shared
by the segmentation, radiomics, and evaluation stages.

Axis convention
---------------
Voxel arrays are indexed ``voxels[x, y, z]`` with x fastest-varying in any
serialized buffer (Fortran order). The physical center of voxel ``(i, j, k)``
is ``origin + (index + 0.5) * spacing``, i.e. ``origin`` is the corner of the
volume. Views are defined as:

* axial:    fixed z; slice pixel ``(row, col)`` -> voxel ``(col, row, z)``
* coronal:  fixed y; slice pixel ``(row, col)`` -> voxel ``(col, y, row)``
* sagittal: fixed x; slice pixel ``(row, col)`` -> voxel ``(x, col, row)``

so slice rows always run along the later axis (y for axial, z otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

VIEWS = ("axial", "coronal", "sagittal")

# axis index along the view normal: axial -> z, coronal -> y, sagittal -> x
VIEW_AXIS = {"axial": 2, "coronal": 1, "sagittal": 0}

BACKGROUND, LIVER, TUMOR, SPLEEN = 0, 1, 2, 3
LABEL_VALUES = (BACKGROUND, LIVER, TUMOR, SPLEEN)


class GeometryError(ValueError):
    """Dims/spacing/buffer inconsistency or mismatched volume geometry."""


@dataclass(frozen=True)
class Volume3D:
    """A scalar intensity grid with physical spacing and origin (mm).

    Immutable after construction; the voxel buffer is set read-only so
    instances can be shared across concurrent workers.
    """

    voxels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=np.float64)
        if vox.ndim != 3 or min(vox.shape) < 1:
            raise GeometryError(f"expected a 3D voxel grid, got shape {vox.shape}")
        if any(s <= 0 for s in self.spacing):
            raise GeometryError(f"spacings must be positive, got {self.spacing}")
        if not np.all(np.isfinite(vox)):
            raise GeometryError("voxel intensities must be finite")
        vox.flags.writeable = False
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape

    @property
    def voxel_volume(self) -> float:
        """Physical volume of one voxel in mm^3."""
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def with_voxels(self, voxels: np.ndarray) -> "Volume3D":
        """New volume on the same grid with replaced intensities."""
        return Volume3D(voxels, self.spacing, self.origin)

    def same_geometry(self, other) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing)
            and np.allclose(self.origin, other.origin)
        )


@dataclass(frozen=True)
class Mask3D:
    """Integer label grid on the same geometry as its paired Volume3D.

    Labels are restricted to {background, liver, tumor, spleen}
    (= {0, 1, 2, 3}); binary views are derived per label.
    """

    labels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.dtype.kind == "b":
            lab = lab.astype(np.uint8)
        if lab.ndim != 3 or min(lab.shape) < 1:
            raise GeometryError(f"expected a 3D label grid, got shape {lab.shape}")
        if any(s <= 0 for s in self.spacing):
            raise GeometryError(f"spacings must be positive, got {self.spacing}")
        if lab.dtype.kind not in "iu":
            if not np.all(lab == np.round(lab)):
                raise GeometryError("labels must be integral")
            lab = lab.astype(np.uint8)
        bad = set(np.unique(lab)) - set(LABEL_VALUES)
        if bad:
            raise GeometryError(f"labels outside the declared set: {sorted(bad)}")
        lab = lab.astype(np.uint8)
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.shape

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def binary(self, label: int) -> np.ndarray:
        """Boolean view of one label."""
        return self.labels == label

    def with_labels(self, labels: np.ndarray) -> "Mask3D":
        return Mask3D(labels, self.spacing, self.origin)

    def same_geometry(self, other) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing)
            and np.allclose(self.origin, other.origin)
        )


@dataclass(frozen=True)
class SliceAddress:
    """One slice of a volume: a view name plus the index along its normal."""

    view: str
    index: int

    def __post_init__(self):
        if self.view not in VIEWS:
            raise ValueError(f"unknown view {self.view!r}, expected one of {VIEWS}")

    def validate(self, dims: tuple[int, int, int]) -> None:
        extent = dims[VIEW_AXIS[self.view]]
        if not 0 <= self.index < extent:
            raise IndexError(
                f"{self.view} index {self.index} out of range [0, {extent})"
            )


def slice_shape(dims: tuple[int, int, int], view: str) -> tuple[int, int]:
    """(rows, cols) of a slice extracted from `dims` along `view`."""
    nx, ny, nz = dims
    if view == "axial":
        return ny, nx
    if view == "coronal":
        return nz, nx
    if view == "sagittal":
        return nz, ny
    raise ValueError(f"unknown view {view!r}")


def slice_to_voxel(addr: SliceAddress, row: int, col: int) -> tuple[int, int, int]:
    """Map a slice pixel back to its 3D voxel index."""
    if addr.view == "axial":
        return (col, row, addr.index)
    if addr.view == "coronal":
        return (col, addr.index, row)
    return (addr.index, col, row)


def voxel_to_slice(view: str, voxel: tuple[int, int, int]) -> tuple[int, int, int]:
    """Map a voxel index to (slice index, row, col) for `view`."""
    x, y, z = voxel
    if view == "axial":
        return (z, y, x)
    if view == "coronal":
        return (y, z, x)
    return (x, z, y)


def extract_slice(v: Volume3D, addr: SliceAddress) -> np.ndarray:
    """Extract a 2D image (rows, cols) per the documented axis convention."""
    addr.validate(v.dims)
    if addr.view == "axial":
        return np.ascontiguousarray(v.voxels[:, :, addr.index].T)
    if addr.view == "coronal":
        return np.ascontiguousarray(v.voxels[:, addr.index, :].T)
    return np.ascontiguousarray(v.voxels[addr.index, :, :].T)


def place_slice(voxels: np.ndarray, view: str, index: int, image: np.ndarray) -> None:
    """Write a slice image into a raw voxel array, inverse of extract_slice."""
    if view == "axial":
        voxels[:, :, index] = image.T
    elif view == "coronal":
        voxels[:, index, :] = image.T
    elif view == "sagittal":
        voxels[index, :, :] = image.T
    else:
        raise ValueError(f"unknown view {view!r}")


def in_plane_spacing(spacing: tuple[float, float, float], view: str) -> tuple[float, float]:
    """(row, col) physical pixel size of a slice from `view`."""
    sx, sy, sz = spacing
    if view == "axial":
        return sy, sx
    if view == "coronal":
        return sz, sx
    return sz, sy


def _resampled_dims(dims, spacing, target) -> tuple[int, int, int]:
    extent = np.asarray(dims, dtype=float) * np.asarray(spacing, dtype=float)
    out = np.ceil(extent / np.asarray(target, dtype=float) - 1e-9).astype(int)
    return tuple(int(max(n, 1)) for n in out)


def _resample_array(arr, spacing, target, order: int) -> np.ndarray:
    out_dims = _resampled_dims(arr.shape, spacing, target)
    grids = [
        (np.arange(n) + 0.5) * t / s - 0.5
        for n, s, t in zip(out_dims, spacing, target)
    ]
    coords = np.meshgrid(*grids, indexing="ij")
    return ndimage.map_coordinates(
        np.asarray(arr, dtype=np.float64), coords, order=order, mode="nearest"
    )


def resample(v: Volume3D, target_spacing, order: str = "cubic-bspline") -> Volume3D:
    """Resample onto a new grid covering the same physical extent.

    `order` is "nearest" (masks) or "cubic-bspline" (images). Output dims are
    ceil(extent / target_spacing); sample positions are cell centers, so
    identity spacing reproduces the input voxelwise.
    """
    target = tuple(float(t) for t in np.broadcast_to(target_spacing, (3,)))
    if any(t <= 0 for t in target):
        raise ValueError(f"target spacing must be positive, got {target}")
    if order not in ("nearest", "cubic-bspline"):
        raise ValueError(f"unknown interpolation order {order!r}")
    if np.allclose(target, v.spacing):
        return Volume3D(v.voxels.copy(), v.spacing, v.origin)
    spline = 0 if order == "nearest" else 3
    out = _resample_array(v.voxels, v.spacing, target, spline)
    return Volume3D(out, target, v.origin)


def resample_mask(m: Mask3D, target_spacing) -> Mask3D:
    """Nearest-neighbour mask resampling; output holds only input labels."""
    target = tuple(float(t) for t in np.broadcast_to(target_spacing, (3,)))
    if any(t <= 0 for t in target):
        raise ValueError(f"target spacing must be positive, got {target}")
    if np.allclose(target, m.spacing):
        return Mask3D(m.labels.copy(), m.spacing, m.origin)
    out = _resample_array(m.labels, m.spacing, target, 0)
    return Mask3D(np.rint(out).astype(np.uint8), target, m.origin)


def percentile_linear(values: np.ndarray, p: float) -> float:
    """Percentile with linear interpolation between order statistics."""
    return float(np.percentile(np.asarray(values, dtype=np.float64), p))


def clip_percentile(v: Volume3D, p: float) -> Volume3D:
    """Clip intensities above the p-th percentile (0 < p <= 100)."""
    if not 0 < p <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {p}")
    cap = percentile_linear(v.voxels, p)
    return v.with_voxels(np.minimum(v.voxels, cap))


def normalize_range(v: Volume3D, lo: float, hi: float) -> Volume3D:
    """Affinely map intensities onto [lo, hi]; constant volumes map to lo."""
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    vmin = float(v.voxels.min())
    vmax = float(v.voxels.max())
    if vmax == vmin:
        return v.with_voxels(np.full(v.dims, lo))
    out = lo + (v.voxels - vmin) * ((hi - lo) / (vmax - vmin))
    return v.with_voxels(out)


def clip_sigma_zscore(v: Volume3D, roi: np.ndarray, n_sigma: float = 3.0,
                      scale: float = 100.0) -> Volume3D:
    """Within `roi`: clip to mean +/- n_sigma*std, z-score against the
    post-clip statistics (population std), and multiply by `scale`.

    Voxels outside the roi are unchanged. A constant roi (sigma = 0) maps to
    zeros to avoid NaN propagation.
    """
    roi = np.asarray(roi, dtype=bool)
    if roi.shape != v.dims:
        raise GeometryError("roi shape does not match the volume")
    inside = v.voxels[roi]
    if inside.size == 0:
        raise ValueError("roi is empty")
    mu = float(inside.mean())
    sigma = float(inside.std())
    clipped = np.clip(inside, mu - n_sigma * sigma, mu + n_sigma * sigma)
    mu_c = float(clipped.mean())
    sigma_c = float(clipped.std())
    if sigma_c == 0.0:
        normed = np.zeros_like(clipped)
    else:
        normed = (clipped - mu_c) / sigma_c * scale
    out = np.array(v.voxels)
    out[roi] = normed
    return v.with_voxels(out)
