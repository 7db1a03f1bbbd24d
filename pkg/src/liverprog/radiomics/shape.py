"""Shape description of a binary roi (14 features).

Surface quantities come from a marching-cubes triangulation of the padded,
lightly smoothed mask indicator; diameters are measured between voxel
centers; axis lengths follow the 4 * sqrt(eigenvalue) convention on the
physical-coordinate covariance. Intensities play no role here.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError
from skimage import measure

# Binary marching cubes inflates the surface of smooth shapes by ~10%
# regardless of resolution; meshing a lightly smoothed indicator instead
# brings digital spheres within 1% of the analytic area.
MESH_SMOOTHING_SIGMA = 0.8

SHAPE_NAMES = (
    "shape_mesh_volume",
    "shape_voxel_volume",
    "shape_surface_area",
    "shape_surface_volume_ratio",
    "shape_sphericity",
    "shape_max_3d_diameter",
    "shape_max_2d_diameter_axial",
    "shape_max_2d_diameter_coronal",
    "shape_max_2d_diameter_sagittal",
    "shape_major_axis_length",
    "shape_minor_axis_length",
    "shape_least_axis_length",
    "shape_elongation",
    "shape_flatness",
)


def _max_pairwise_distance(pts: np.ndarray) -> float:
    """Largest Euclidean distance between any two points.

    The convex hull prunes the candidate set when it helps; degenerate
    (collinear/coplanar) sets fall back to chunked brute force.
    """
    if pts.shape[0] < 2:
        return 0.0
    if pts.shape[0] > 64:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    best = 0.0
    for i in range(0, pts.shape[0], 512):
        chunk = pts[i : i + 512]
        d2 = ((chunk[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


def _mesh(mask: np.ndarray, spacing) -> tuple[np.ndarray, np.ndarray]:
    padded = np.pad(mask, 2).astype(np.float64)
    field = ndimage.gaussian_filter(padded, MESH_SMOOTHING_SIGMA)
    if field.max() <= 0.5:
        field = padded  # thin roi: smoothing would erase the level set
    verts, faces, _, _ = measure.marching_cubes(field, level=0.5, spacing=tuple(spacing))
    return verts, faces


def _mesh_volume(verts: np.ndarray, faces: np.ndarray) -> float:
    tri = verts[faces]
    signed = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))
    return float(abs(signed.sum()) / 6.0)


def shape_features(mask: np.ndarray, spacing) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("shape features need a nonempty mask")
    spacing = np.asarray(spacing, dtype=np.float64)
    idx = np.column_stack(np.nonzero(mask))
    centers = (idx + 0.5) * spacing

    verts, faces = _mesh(mask, spacing)
    mesh_volume = _mesh_volume(verts, faces)
    surface_area = float(measure.mesh_surface_area(verts, faces))
    voxel_volume = float(idx.shape[0] * spacing.prod())
    sphericity = (36.0 * np.pi * mesh_volume**2) ** (1.0 / 3.0) / surface_area

    max_3d = _max_pairwise_distance(centers)
    planar = []
    for fixed_axis, keep in ((2, (0, 1)), (1, (0, 2)), (0, (1, 2))):
        best = 0.0
        for value in np.unique(idx[:, fixed_axis]):
            sel = idx[:, fixed_axis] == value
            best = max(best, _max_pairwise_distance(centers[sel][:, keep]))
        planar.append(best)

    cov = np.cov(centers, rowvar=False, bias=True).reshape(3, 3)
    eigs = np.sort(np.maximum(np.linalg.eigvalsh(cov), 0.0))
    least, minor, major = (4.0 * np.sqrt(e) for e in eigs)
    elongation = float(np.sqrt(eigs[1] / eigs[2])) if eigs[2] > 0 else 0.0
    flatness = float(np.sqrt(eigs[0] / eigs[2])) if eigs[2] > 0 else 0.0

    return np.array(
        [
            mesh_volume,
            voxel_volume,
            surface_area,
            surface_area / mesh_volume,
            sphericity,
            max_3d,
            planar[0],
            planar[1],
            planar[2],
            major,
            minor,
            least,
            elongation,
            flatness,
        ]
    )
