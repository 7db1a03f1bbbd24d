"""Connected components and per-lesion statistics.

Components use 26-connectivity. Ids are assigned 1..n by the scan order of
each component's first voxel, x fastest-varying, matching the serialization
order of the volume payload, so labellings are reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

_STRUCT_26 = np.ones((3, 3, 3), dtype=bool)


def connected_components(binary: np.ndarray) -> tuple[np.ndarray, int]:
    """Label 26-connected components of a boolean array.

    Returns (labels, count) with labels int32 and ids 1..count ordered by
    first-voxel scan order.
    """
    binary = np.asarray(binary, dtype=bool)
    raw, n = ndimage.label(binary, structure=_STRUCT_26)
    if n == 0:
        return np.zeros(binary.shape, dtype=np.int32), 0
    flat = raw.ravel(order="F")
    first = {}
    for pos in np.flatnonzero(flat):
        lab = flat[pos]
        if lab not in first:
            first[lab] = pos
            if len(first) == n:
                break
    order = sorted(first, key=first.get)
    remap = np.zeros(n + 1, dtype=np.int32)
    for new_id, old_id in enumerate(order, start=1):
        remap[old_id] = new_id
    return remap[raw], n


@dataclass(frozen=True)
class Instance:
    """Summary of one connected component."""

    id: int
    voxel_count: int
    volume_mm3: float
    centroid_mm: tuple[float, float, float]
    diameter_mm: float


def _slice_boundary(points_2d: np.ndarray) -> np.ndarray:
    """Keep points with at least one 4-neighbor missing from the set."""
    occupied = {(int(x), int(y)) for x, y in points_2d}
    keep = []
    for x, y in occupied:
        if (
            (x - 1, y) not in occupied
            or (x + 1, y) not in occupied
            or (x, y - 1) not in occupied
            or (x, y + 1) not in occupied
        ):
            keep.append((x, y))
    return np.array(keep, dtype=np.int64)


def longest_axial_diameter(component: np.ndarray, spacing) -> float:
    """Longest in-plane distance between boundary voxel centers.

    Scans every axial slice the component touches and takes the max pairwise
    distance, brute force. A single-voxel component has diameter 0.
    """
    xs, ys, zs = np.nonzero(np.asarray(component, dtype=bool))
    if xs.size == 0:
        return 0.0
    sx, sy = float(spacing[0]), float(spacing[1])
    best = 0.0
    for z in np.unique(zs):
        in_slice = zs == z
        pts = _slice_boundary(np.column_stack((xs[in_slice], ys[in_slice])))
        dx = (pts[:, 0][:, None] - pts[:, 0][None, :]) * sx
        dy = (pts[:, 1][:, None] - pts[:, 1][None, :]) * sy
        d = float(np.sqrt(dx * dx + dy * dy).max())
        best = max(best, d)
    return best


def instance_stats(binary: np.ndarray, spacing, origin=(0.0, 0.0, 0.0)) -> list[Instance]:
    """Connected components of a binary mask with size and extent summaries.

    Centroids are physical coordinates of the mean voxel center.
    """
    labels, n = connected_components(binary)
    voxel_volume = float(spacing[0]) * float(spacing[1]) * float(spacing[2])
    out = []
    for cid in range(1, n + 1):
        comp = labels == cid
        xs, ys, zs = np.nonzero(comp)
        count = int(xs.size)
        centroid = tuple(
            float(origin[a] + (idx.mean() + 0.5) * spacing[a])
            for a, idx in enumerate((xs, ys, zs))
        )
        out.append(
            Instance(
                id=cid,
                voxel_count=count,
                volume_mm3=count * voxel_volume,
                centroid_mm=centroid,
                diameter_mm=longest_axial_diameter(comp, spacing),
            )
        )
    return out
