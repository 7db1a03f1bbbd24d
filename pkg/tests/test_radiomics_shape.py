"""Shape features: analytic solids, exact box geometry, diameter oracle."""

import math

import numpy as np
import pytest

from liverprog.radiomics.shape import (
    SHAPE_NAMES,
    _max_pairwise_distance,
    shape_features,
)

S = {name: i for i, name in enumerate(SHAPE_NAMES)}


def _sphere_mask(radius_vox, dim, spacing=(1.0, 1.0, 1.0)):
    idx = np.indices((dim, dim, dim)).astype(np.float64)
    centers = (idx + 0.5) * np.asarray(spacing).reshape(3, 1, 1, 1)
    mid = dim / 2.0 * np.asarray(spacing).reshape(3, 1, 1, 1)
    return ((centers - mid) ** 2).sum(axis=0) <= radius_vox**2


class TestAnalyticSphere:
    def test_volume_area_sphericity_within_5pct(self):
        r = 15.0
        got = shape_features(_sphere_mask(r, 40), (1.0, 1.0, 1.0))
        volume = 4.0 / 3.0 * math.pi * r**3
        area = 4.0 * math.pi * r**2
        assert got[S["shape_voxel_volume"]] == pytest.approx(volume, rel=0.05)
        assert got[S["shape_mesh_volume"]] == pytest.approx(volume, rel=0.05)
        assert got[S["shape_surface_area"]] == pytest.approx(area, rel=0.05)
        assert got[S["shape_sphericity"]] == pytest.approx(1.0, rel=0.05)
        assert got[S["shape_surface_volume_ratio"]] == pytest.approx(
            3.0 / r, rel=0.05
        )
        assert got[S["shape_max_3d_diameter"]] == pytest.approx(2 * r, rel=0.05)
        for view in ("axial", "coronal", "sagittal"):
            assert got[S[f"shape_max_2d_diameter_{view}"]] == pytest.approx(
                2 * r, rel=0.05
            )
        # perfectly isotropic: all three axes equal, ratios near 1
        assert got[S["shape_elongation"]] == pytest.approx(1.0, abs=0.02)
        assert got[S["shape_flatness"]] == pytest.approx(1.0, abs=0.02)

    def test_anisotropic_spacing_same_physical_sphere(self):
        r = 12.0
        iso = shape_features(_sphere_mask(r, 32), (1.0, 1.0, 1.0))
        # same sphere sampled on a 1 x 1 x 2 grid
        idx = np.indices((32, 32, 16)).astype(np.float64)
        spacing = np.array([1.0, 1.0, 2.0]).reshape(3, 1, 1, 1)
        centers = (idx + 0.5) * spacing
        mask = ((centers - 16.0) ** 2).sum(axis=0) <= r**2
        aniso = shape_features(mask, (1.0, 1.0, 2.0))
        assert aniso[S["shape_voxel_volume"]] == pytest.approx(
            iso[S["shape_voxel_volume"]], rel=0.05
        )
        assert aniso[S["shape_max_3d_diameter"]] == pytest.approx(2 * r, rel=0.08)


class TestBoxGeometry:
    def test_exact_box_values(self):
        mask = np.zeros((8, 6, 4), dtype=bool)
        mask[0:5, 0:3, 0:2] = True  # 5 x 3 x 2 voxels
        spacing = (1.0, 2.0, 3.0)
        got = shape_features(mask, spacing)

        assert got[S["shape_voxel_volume"]] == pytest.approx(30 * 6.0)
        # voxel centers span 4 mm in x, 4 mm in y, 3 mm in z
        assert got[S["shape_max_3d_diameter"]] == pytest.approx(
            math.sqrt(16 + 16 + 9)
        )
        assert got[S["shape_max_2d_diameter_axial"]] == pytest.approx(
            math.sqrt(16 + 16)
        )
        assert got[S["shape_max_2d_diameter_coronal"]] == pytest.approx(
            math.sqrt(16 + 9)
        )
        assert got[S["shape_max_2d_diameter_sagittal"]] == pytest.approx(
            math.sqrt(16 + 9)
        )

    def test_line_axis_lengths(self):
        mask = np.zeros((10, 3, 3), dtype=bool)
        mask[:, 1, 1] = True
        got = shape_features(mask, (1.0, 1.0, 1.0))
        # population variance of 0..9 is 8.25; the line has no other extent
        assert got[S["shape_major_axis_length"]] == pytest.approx(
            4.0 * math.sqrt(8.25)
        )
        assert got[S["shape_minor_axis_length"]] == pytest.approx(0.0, abs=1e-9)
        assert got[S["shape_least_axis_length"]] == pytest.approx(0.0, abs=1e-9)
        assert got[S["shape_elongation"]] == pytest.approx(0.0, abs=1e-9)
        assert got[S["shape_flatness"]] == pytest.approx(0.0, abs=1e-9)

    def test_single_voxel(self):
        mask = np.zeros((3, 3, 3), dtype=bool)
        mask[1, 1, 1] = True
        got = shape_features(mask, (1.0, 1.0, 1.0))
        assert got[S["shape_voxel_volume"]] == pytest.approx(1.0)
        assert got[S["shape_max_3d_diameter"]] == 0.0
        assert got[S["shape_mesh_volume"]] > 0.0

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            shape_features(np.zeros((4, 4, 4), dtype=bool), (1.0, 1.0, 1.0))

    def test_fourteen_features(self):
        assert len(SHAPE_NAMES) == 14


class TestMaxPairwiseDistance:
    def test_matches_brute_force(self, rng):
        for n in (2, 5, 64, 65, 200, 600):
            pts = rng.normal(size=(n, 3)) * 10
            d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
            assert _max_pairwise_distance(pts) == pytest.approx(
                math.sqrt(d2.max()), abs=1e-9
            )

    def test_collinear_points_no_hull(self):
        # collinear sets break the convex hull; brute force must take over
        t = np.linspace(0.0, 9.0, 100)
        pts = np.column_stack([t, 2 * t, 3 * t])
        assert _max_pairwise_distance(pts) == pytest.approx(
            math.sqrt(81 + 324 + 729), abs=1e-9
        )

    def test_planar_points(self, rng):
        pts3 = np.zeros((120, 3))
        pts3[:, :2] = rng.normal(size=(120, 2)) * 5
        d2 = ((pts3[:, None, :] - pts3[None, :, :]) ** 2).sum(axis=2)
        assert _max_pairwise_distance(pts3) == pytest.approx(
            math.sqrt(d2.max()), abs=1e-9
        )

    def test_short_inputs(self):
        assert _max_pairwise_distance(np.zeros((0, 3))) == 0.0
        assert _max_pairwise_distance(np.array([[1.0, 2.0, 3.0]])) == 0.0
