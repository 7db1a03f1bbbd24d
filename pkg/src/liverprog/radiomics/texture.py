"""Texture matrices and their features.

Four matrix families over the discretized roi: gray-level co-occurrence
(22 features), run length (16), size zone (16) and dependence (14).
Co-occurrence and run-length statistics are computed per direction over the
13 unique distance-1 3D offsets and feature-averaged; zones use 26-connected
components of constant level; dependence counts equal-level 26-neighbors.
Voxels outside the roi never pair, never extend runs and never count as
neighbors.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .preprocess import DiscretizedVolume

EPS = np.spacing(1)

# The 13 offsets with a positive leading nonzero component; their negations
# complete the 26-neighborhood.
OFFSETS = tuple(
    (dx, dy, dz)
    for dx in (1, 0, -1)
    for dy in (1, 0, -1)
    for dz in (1, 0, -1)
    if (dx, dy, dz) > (0, 0, 0)
)

_STRUCT_26 = np.ones((3, 3, 3), dtype=bool)

GLCM_NAMES = (
    "glcm_autocorrelation",
    "glcm_joint_average",
    "glcm_cluster_prominence",
    "glcm_cluster_shade",
    "glcm_cluster_tendency",
    "glcm_contrast",
    "glcm_correlation",
    "glcm_difference_average",
    "glcm_difference_entropy",
    "glcm_difference_variance",
    "glcm_joint_energy",
    "glcm_joint_entropy",
    "glcm_imc1",
    "glcm_imc2",
    "glcm_idm",
    "glcm_idmn",
    "glcm_id",
    "glcm_idn",
    "glcm_inverse_variance",
    "glcm_maximum_probability",
    "glcm_sum_entropy",
    "glcm_sum_squares",
)

GLRLM_NAMES = (
    "glrlm_short_run_emphasis",
    "glrlm_long_run_emphasis",
    "glrlm_gray_level_nonuniformity",
    "glrlm_gray_level_nonuniformity_normalized",
    "glrlm_run_length_nonuniformity",
    "glrlm_run_length_nonuniformity_normalized",
    "glrlm_run_percentage",
    "glrlm_gray_level_variance",
    "glrlm_run_variance",
    "glrlm_run_entropy",
    "glrlm_low_gray_level_run_emphasis",
    "glrlm_high_gray_level_run_emphasis",
    "glrlm_short_run_low_gray_level_emphasis",
    "glrlm_short_run_high_gray_level_emphasis",
    "glrlm_long_run_low_gray_level_emphasis",
    "glrlm_long_run_high_gray_level_emphasis",
)

GLSZM_NAMES = (
    "glszm_small_area_emphasis",
    "glszm_large_area_emphasis",
    "glszm_gray_level_nonuniformity",
    "glszm_gray_level_nonuniformity_normalized",
    "glszm_size_zone_nonuniformity",
    "glszm_size_zone_nonuniformity_normalized",
    "glszm_zone_percentage",
    "glszm_gray_level_variance",
    "glszm_zone_variance",
    "glszm_zone_entropy",
    "glszm_low_gray_level_zone_emphasis",
    "glszm_high_gray_level_zone_emphasis",
    "glszm_small_area_low_gray_level_emphasis",
    "glszm_small_area_high_gray_level_emphasis",
    "glszm_large_area_low_gray_level_emphasis",
    "glszm_large_area_high_gray_level_emphasis",
)

GLDM_NAMES = (
    "gldm_small_dependence_emphasis",
    "gldm_large_dependence_emphasis",
    "gldm_gray_level_nonuniformity",
    "gldm_dependence_nonuniformity",
    "gldm_dependence_nonuniformity_normalized",
    "gldm_gray_level_variance",
    "gldm_dependence_variance",
    "gldm_dependence_entropy",
    "gldm_low_gray_level_emphasis",
    "gldm_high_gray_level_emphasis",
    "gldm_small_dependence_low_gray_level_emphasis",
    "gldm_small_dependence_high_gray_level_emphasis",
    "gldm_large_dependence_low_gray_level_emphasis",
    "gldm_large_dependence_high_gray_level_emphasis",
)


def _paired_slabs(shape, offset):
    """Index tuples (at, shifted) so arr[at] pairs with arr[shifted] at +offset."""
    at, shifted = [], []
    for d, n in zip(offset, shape):
        if d >= 0:
            at.append(slice(0, n - d))
            shifted.append(slice(d, n))
        else:
            at.append(slice(-d, n))
            shifted.append(slice(0, n + d))
    return tuple(at), tuple(shifted)


def cooccurrence_matrix(levels: np.ndarray, offset, num_levels: int) -> np.ndarray:
    """Symmetric co-occurrence counts for one offset (level 0 = outside roi)."""
    at, shifted = _paired_slabs(levels.shape, offset)
    a = levels[at].ravel()
    b = levels[shifted].ravel()
    both = (a > 0) & (b > 0)
    counts = np.bincount(
        (a[both] - 1) * num_levels + (b[both] - 1), minlength=num_levels * num_levels
    ).reshape(num_levels, num_levels)
    return (counts + counts.T).astype(np.float64)


def _glcm_features_one(p: np.ndarray, num_levels: int) -> np.ndarray:
    lv = np.arange(1, num_levels + 1, dtype=np.float64)
    i = lv[:, None]
    j = lv[None, :]
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    ux = float((lv * px).sum())
    uy = float((lv * py).sum())
    sigx = float(np.sqrt(((lv - ux) ** 2 * px).sum()))
    sigy = float(np.sqrt(((lv - uy) ** 2 * py).sum()))

    k_sub = np.arange(num_levels, dtype=np.float64)
    p_sub = np.array([p[np.abs(i - j) == k].sum() for k in k_sub])
    k_add = np.arange(2, 2 * num_levels + 1, dtype=np.float64)
    p_add = np.array([p[(i + j) == k].sum() for k in k_add])

    hx = float(-(px * np.log2(px + EPS)).sum())
    hy = float(-(py * np.log2(py + EPS)).sum())
    hxy = float(-(p * np.log2(p + EPS)).sum())
    pxy = px[:, None] * py[None, :]
    hxy1 = float(-(p * np.log2(pxy + EPS)).sum())
    hxy2 = float(-(pxy * np.log2(pxy + EPS)).sum())

    diff_avg = float((k_sub * p_sub).sum())
    if sigx > 0 and sigy > 0:
        correlation = float(((i * j * p).sum() - ux * uy) / (sigx * sigy))
    else:
        correlation = 1.0
    imc1 = (hxy - hxy1) / max(hx, hy) if max(hx, hy) > 0 else 0.0
    imc2 = float(np.sqrt(max(1.0 - np.exp(-2.0 * (hxy2 - hxy)), 0.0)))

    return np.array(
        [
            float((i * j * p).sum()),
            ux,
            float(((i + j - ux - uy) ** 4 * p).sum()),
            float(((i + j - ux - uy) ** 3 * p).sum()),
            float(((i + j - ux - uy) ** 2 * p).sum()),
            float(((i - j) ** 2 * p).sum()),
            correlation,
            diff_avg,
            float(-(p_sub * np.log2(p_sub + EPS)).sum()),
            float(((k_sub - diff_avg) ** 2 * p_sub).sum()),
            float((p * p).sum()),
            hxy,
            imc1,
            imc2,
            float((p_sub / (1.0 + k_sub**2)).sum()),
            float((p_sub / (1.0 + k_sub**2 / num_levels**2)).sum()),
            float((p_sub / (1.0 + k_sub)).sum()),
            float((p_sub / (1.0 + k_sub / num_levels)).sum()),
            float((p_sub[1:] / k_sub[1:] ** 2).sum()),
            float(p.max()),
            float(-(p_add * np.log2(p_add + EPS)).sum()),
            float(((i - ux) ** 2 * p).sum()),
        ]
    )


def glcm(dv: DiscretizedVolume) -> np.ndarray:
    """22 co-occurrence features, averaged over non-empty offsets."""
    if dv.roi.sum() < 2:
        raise ValueError("co-occurrence needs at least 2 roi voxels")
    per_offset = []
    for offset in OFFSETS:
        counts = cooccurrence_matrix(dv.levels, offset, dv.num_levels)
        total = counts.sum()
        if total == 0:
            continue
        per_offset.append(_glcm_features_one(counts / total, dv.num_levels))
    if not per_offset:
        return np.zeros(len(GLCM_NAMES))
    return np.mean(per_offset, axis=0)


def run_length_matrix(levels: np.ndarray, offset, num_levels: int) -> np.ndarray:
    """Run counts along one direction; rows are levels, columns run lengths.

    Lines are walked in parallel from every grid entry point of the
    direction; level 0 (outside roi) terminates runs and is discarded.
    """
    shape = levels.shape
    starts = np.ones(shape, dtype=bool)
    at, shifted = _paired_slabs(shape, offset)
    starts[shifted] = False  # reachable from a previous voxel on the line
    origins = np.argwhere(starts)

    max_steps = max(shape)
    seq = np.zeros((origins.shape[0], max_steps + 1), dtype=np.int32)
    pos = origins.copy()
    for t in range(max_steps):
        ok = np.all((pos >= 0) & (pos < shape), axis=1)
        if not ok.any():
            break
        seq[ok, t] = levels[tuple(pos[ok].T)]
        pos += offset

    flat = seq.ravel()
    change = np.flatnonzero(np.diff(flat) != 0) + 1
    run_starts = np.concatenate(([0], change))
    run_lengths = np.diff(np.concatenate((run_starts, [flat.size])))
    run_values = flat[run_starts]
    keep = run_values > 0
    run_values, run_lengths = run_values[keep], run_lengths[keep]

    cols = int(run_lengths.max()) if run_lengths.size else 1
    matrix = np.zeros((num_levels, cols), dtype=np.float64)
    np.add.at(matrix, (run_values - 1, run_lengths - 1), 1.0)
    return matrix


def size_zone_matrix(levels: np.ndarray, num_levels: int) -> np.ndarray:
    """Zone counts: 26-connected components of constant level, by size."""
    triplets = []
    max_size = 1
    for lvl in range(1, num_levels + 1):
        comp, n = ndimage.label(levels == lvl, structure=_STRUCT_26)
        if n == 0:
            continue
        sizes = np.bincount(comp.ravel())[1:]
        max_size = max(max_size, int(sizes.max()))
        triplets.append((lvl, sizes))
    matrix = np.zeros((num_levels, max_size), dtype=np.float64)
    for lvl, sizes in triplets:
        for s in sizes:
            matrix[lvl - 1, s - 1] += 1.0
    return matrix


def dependence_matrix(levels: np.ndarray, num_levels: int) -> np.ndarray:
    """Dependence counts: per roi voxel, 1 + equal-level 26-neighbors in roi."""
    roi = levels > 0
    neighbors = np.zeros(levels.shape, dtype=np.int32)
    for offset in OFFSETS:
        at, shifted = _paired_slabs(levels.shape, offset)
        same = (levels[at] == levels[shifted]) & roi[at] & roi[shifted]
        neighbors[at] += same
        neighbors[shifted] += same
    dep = neighbors[roi] + 1
    matrix = np.zeros((num_levels, int(dep.max())), dtype=np.float64)
    np.add.at(matrix, (levels[roi] - 1, dep - 1), 1.0)
    return matrix


def _distribution_features(matrix: np.ndarray, roi_count: int) -> dict[str, float]:
    """Aggregates shared by the run/zone/dependence families.

    Rows index gray level i >= 1, columns index the size-like quantity
    j >= 1; N is the total count.
    """
    total = matrix.sum()
    i = np.arange(1, matrix.shape[0] + 1, dtype=np.float64)[:, None]
    j = np.arange(1, matrix.shape[1] + 1, dtype=np.float64)[None, :]
    p = matrix / total
    mu_i = float((i * p).sum())
    mu_j = float((j * p).sum())
    row = matrix.sum(axis=1)
    col = matrix.sum(axis=0)
    return {
        "small": float((matrix / j**2).sum() / total),
        "large": float((matrix * j**2).sum() / total),
        "gln": float((row**2).sum() / total),
        "glnn": float((row**2).sum() / total**2),
        "jn": float((col**2).sum() / total),
        "jnn": float((col**2).sum() / total**2),
        "percentage": float(total / roi_count),
        "glv": float((p * (i - mu_i) ** 2).sum()),
        "jv": float((p * (j - mu_j) ** 2).sum()),
        "entropy": float(-(p * np.log2(p + EPS)).sum()),
        "lgl": float((matrix / i**2).sum() / total),
        "hgl": float((matrix * i**2).sum() / total),
        "small_lgl": float((matrix / (i**2 * j**2)).sum() / total),
        "small_hgl": float((matrix * i**2 / j**2).sum() / total),
        "large_lgl": float((matrix * j**2 / i**2).sum() / total),
        "large_hgl": float((matrix * i**2 * j**2).sum() / total),
    }


def glrlm(dv: DiscretizedVolume) -> np.ndarray:
    """16 run-length features, averaged over the 13 directions."""
    if dv.roi.sum() < 2:
        raise ValueError("run lengths need at least 2 roi voxels")
    roi_count = int(dv.roi.sum())
    per_direction = []
    for offset in OFFSETS:
        matrix = run_length_matrix(dv.levels, offset, dv.num_levels)
        f = _distribution_features(matrix, roi_count)
        per_direction.append(
            [
                f["small"], f["large"], f["gln"], f["glnn"], f["jn"], f["jnn"],
                f["percentage"], f["glv"], f["jv"], f["entropy"], f["lgl"],
                f["hgl"], f["small_lgl"], f["small_hgl"], f["large_lgl"],
                f["large_hgl"],
            ]
        )
    return np.mean(per_direction, axis=0)


def glszm(dv: DiscretizedVolume) -> np.ndarray:
    """16 size-zone features."""
    if dv.roi.sum() < 2:
        raise ValueError("size zones need at least 2 roi voxels")
    matrix = size_zone_matrix(dv.levels, dv.num_levels)
    f = _distribution_features(matrix, int(dv.roi.sum()))
    return np.array(
        [
            f["small"], f["large"], f["gln"], f["glnn"], f["jn"], f["jnn"],
            f["percentage"], f["glv"], f["jv"], f["entropy"], f["lgl"],
            f["hgl"], f["small_lgl"], f["small_hgl"], f["large_lgl"],
            f["large_hgl"],
        ]
    )


def gldm(dv: DiscretizedVolume) -> np.ndarray:
    """14 dependence features."""
    if dv.roi.sum() < 2:
        raise ValueError("dependences need at least 2 roi voxels")
    matrix = dependence_matrix(dv.levels, dv.num_levels)
    f = _distribution_features(matrix, int(dv.roi.sum()))
    return np.array(
        [
            f["small"], f["large"], f["gln"], f["jn"], f["jnn"], f["glv"],
            f["jv"], f["entropy"], f["lgl"], f["hgl"], f["small_lgl"],
            f["small_hgl"], f["large_lgl"], f["large_hgl"],
        ]
    )
