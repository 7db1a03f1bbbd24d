"""Propagate point prompts from one annotated slice to a full 3D mask.

The user prompts a single slice. That slice is segmented in 2D, its
foreground is projected as collinear point runs ("lines") onto the slices of
the two orthogonal views, and in each view the slice holding the longest line
is segmented next, prompted automatically. The three segmented slices then
seed one sweep per orientation: every third slice crossing the lines'
bounding box gets a positive prompt picked from the line points falling in it
and a negative prompt picked outside the box footprint, skipped slices are
linearly interpolated, and the three orientation logit volumes are averaged
and binarized with an adaptive threshold.

Prompts are ranked by a weighted sum of three per-candidate costs, each
min-max normalized over the candidate set:

* intensity: absolute difference to the candidate set's median intensity;
* location: Euclidean pixel distance to the candidate set's centroid;
* homogeneity: population standard deviation of the surrounding window
  (clipped at slice borders).

Lower is better; the argmin is the prompt. Weights default to (1, 1, 2).
All ties break toward the lowest raster or slice index so runs are
bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .promptseg import PromptPoint, Segmenter2D
from .volume import (
    VIEW_AXIS,
    VIEWS,
    Mask3D,
    SliceAddress,
    Volume3D,
    extract_slice,
    place_slice,
    slice_shape,
    voxel_to_slice,
)


class NoObjectFoundError(RuntimeError):
    """The initial slice segmentation produced an empty region."""


@dataclass(frozen=True)
class PromptCostWeights:
    """Weights for the intensity, location and homogeneity terms."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 2.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("cost weights must be nonnegative")
        if self.alpha + self.beta + self.gamma <= 0:
            raise ValueError("at least one cost weight must be positive")


@dataclass(frozen=True)
class PropagationConfig:
    weights: PromptCostWeights = field(default_factory=PromptCostWeights)
    neighborhood: int = 11
    negative_exclusion_fraction: float = 0.10
    slice_density: float = 1.0 / 3.0
    threshold_k: float = 2.0

    def __post_init__(self):
        if self.neighborhood < 3 or self.neighborhood % 2 == 0:
            raise ValueError("neighborhood must be odd and >= 3")
        if not 0 <= self.negative_exclusion_fraction < 1:
            raise ValueError("negative_exclusion_fraction must be in [0, 1)")
        if not 0 < self.slice_density <= 1:
            raise ValueError("slice_density must be in (0, 1]")


@dataclass(frozen=True, eq=False)
class PositiveLine:
    """A collinear run of foreground pixels projected into one slice."""

    view: str
    index: int
    points: np.ndarray  # (n, 2) int64 (row, col), sorted along the varying axis

    @property
    def length(self) -> int:
        return int(self.points.shape[0])


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.int64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise ValueError("candidate set must be a nonempty (n, 2) array of (row, col)")
    return pts


def _window_stds(points: np.ndarray, image: np.ndarray, window: int) -> np.ndarray:
    """Population std of the border-clipped window around each point.

    Uses 2D prefix sums of I and I^2 so whole-slice candidate sets stay
    cheap; negative variances from rounding are clamped to zero.
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    half = window // 2
    s1 = np.zeros((h + 1, w + 1))
    s2 = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=s1[1:, 1:])
    np.cumsum(np.cumsum(img * img, axis=0), axis=1, out=s2[1:, 1:])

    r0 = np.maximum(points[:, 0] - half, 0)
    r1 = np.minimum(points[:, 0] + half, h - 1)
    c0 = np.maximum(points[:, 1] - half, 0)
    c1 = np.minimum(points[:, 1] + half, w - 1)
    area = (r1 - r0 + 1) * (c1 - c0 + 1)

    def box(s):
        return s[r1 + 1, c1 + 1] - s[r0, c1 + 1] - s[r1 + 1, c0] + s[r0, c0]

    mean = box(s1) / area
    var = box(s2) / area - mean * mean
    return np.sqrt(np.maximum(var, 0.0))


def _intensity_costs(points: np.ndarray, image: np.ndarray) -> np.ndarray:
    vals = image[points[:, 0], points[:, 1]].astype(np.float64)
    return np.abs(vals - np.median(vals))


def _location_costs(points: np.ndarray) -> np.ndarray:
    centroid = points.mean(axis=0)
    return np.sqrt(((points - centroid) ** 2).sum(axis=1))


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def total_costs(
    points,
    image: np.ndarray,
    weights: PromptCostWeights | None = None,
    window: int = 11,
) -> np.ndarray:
    """Weighted normalized cost of every candidate; lower is better."""
    w = weights or PromptCostWeights()
    pts = _as_points(points)
    return (
        w.alpha * _minmax(_intensity_costs(pts, image))
        + w.beta * _minmax(_location_costs(pts))
        + w.gamma * _minmax(_window_stds(pts, image, window))
    )


def intensity_cost(p, points, image: np.ndarray) -> float:
    """Absolute difference between I(p) and the median intensity over the
    candidate set (even-sized sets: mean of the two middle values)."""
    pts = _as_points(points)
    vals = image[pts[:, 0], pts[:, 1]].astype(np.float64)
    return float(abs(image[p[0], p[1]] - np.median(vals)))


def location_cost(p, points) -> float:
    """Euclidean pixel distance from p to the candidate set's centroid."""
    centroid = _as_points(points).mean(axis=0)
    return float(math.hypot(p[0] - centroid[0], p[1] - centroid[1]))


def homogeneity_cost(p, image: np.ndarray, window: int = 11) -> float:
    """Population std of the window centered at p, clipped at the borders."""
    pts = np.asarray([p], dtype=np.int64)
    return float(_window_stds(pts, image, window)[0])


def total_cost(
    p,
    points,
    image: np.ndarray,
    weights: PromptCostWeights | None = None,
    window: int = 11,
) -> float:
    """Weighted sum of min-max normalized costs for one member of the set.

    Degenerate criteria (max equals min over the set) contribute zero.
    """
    pts = _as_points(points)
    match = (pts[:, 0] == p[0]) & (pts[:, 1] == p[1])
    if not match.any():
        raise ValueError(f"point {p} is not in the candidate set")
    return float(total_costs(pts, image, weights, window)[np.argmax(match)])


def _argmin_raster(costs: np.ndarray, pts: np.ndarray, width: int) -> tuple[int, int]:
    best = costs.min()
    tied = np.flatnonzero(costs == best)
    raster = pts[tied, 0] * width + pts[tied, 1]
    pick = tied[np.argmin(raster)]
    return int(pts[pick, 0]), int(pts[pick, 1])


def select_positive_prompt(
    points,
    image: np.ndarray,
    weights: PromptCostWeights | None = None,
    window: int = 11,
) -> tuple[int, int]:
    """Candidate with minimal total cost; raster order breaks ties."""
    pts = _as_points(points)
    costs = total_costs(pts, image, weights, window)
    return _argmin_raster(costs, pts, image.shape[1])


def select_negative_prompt(
    points,
    image: np.ndarray,
    weights: PromptCostWeights | None = None,
    window: int = 11,
    exclusion_fraction: float = 0.10,
) -> tuple[int, int]:
    """Like select_positive_prompt, after dropping the darkest candidates.

    The darkest floor(fraction * n) candidates are removed first (at least
    one always survives); costs are then normalized over the survivors.
    """
    pts = _as_points(points)
    n = pts.shape[0]
    drop = min(int(exclusion_fraction * n), n - 1)
    if drop > 0:
        vals = image[pts[:, 0], pts[:, 1]].astype(np.float64)
        raster = pts[:, 0] * image.shape[1] + pts[:, 1]
        darkest = np.lexsort((raster, vals))[:drop]
        keep = np.ones(n, dtype=bool)
        keep[darkest] = False
        pts = pts[keep]
    costs = total_costs(pts, image, weights, window)
    return _argmin_raster(costs, pts, image.shape[1])


def _pixels_to_voxels(view: str, index: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    fixed = np.full(rows.shape, index, dtype=np.int64)
    if view == "axial":
        return np.column_stack((cols, rows, fixed))
    if view == "coronal":
        return np.column_stack((cols, fixed, rows))
    return np.column_stack((fixed, cols, rows))


def _voxels_to_pixels(view: str, vox: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, y, z = vox[:, 0], vox[:, 1], vox[:, 2]
    if view == "axial":
        return z, y, x
    if view == "coronal":
        return y, z, x
    return x, z, y


def project_lines(mask2d: np.ndarray, host: SliceAddress) -> dict[str, list[PositiveLine]]:
    """Project a segmented slice's foreground onto the orthogonal views.

    Every orthogonal slice crossed by the foreground receives its maximal
    collinear runs, as (row, col) points of that slice. An empty mask
    projects to no lines.
    """
    out: dict[str, list[PositiveLine]] = {v: [] for v in VIEWS if v != host.view}
    rows, cols = np.nonzero(np.asarray(mask2d, dtype=bool))
    if rows.size == 0:
        return out
    vox = _pixels_to_voxels(host.view, host.index, rows, cols)
    for view in out:
        idx, r, c = _voxels_to_pixels(view, vox)
        for sl in np.unique(idx):
            sel = idx == sl
            pts = np.column_stack((r[sel], c[sel]))
            # The host's fixed axis pins one coordinate, so runs vary along
            # the other; split where that coordinate jumps.
            vary = 1 if np.all(pts[:, 0] == pts[0, 0]) else 0
            order = np.argsort(pts[:, vary], kind="stable")
            pts = pts[order]
            gaps = np.flatnonzero(np.diff(pts[:, vary]) > 1)
            for run in np.split(pts, gaps + 1):
                out[view].append(PositiveLine(view, int(sl), run))
    return out


def _line_extension(line: PositiveLine, shape: tuple[int, int]) -> np.ndarray:
    """All slice pixels on the line's supporting row/column, minus the run."""
    pts = line.points
    rows, cols = shape
    if np.all(pts[:, 0] == pts[0, 0]):
        full = np.column_stack(
            (np.full(cols, pts[0, 0], dtype=np.int64), np.arange(cols, dtype=np.int64))
        )
        taken = np.isin(full[:, 1], pts[:, 1])
    else:
        full = np.column_stack(
            (np.arange(rows, dtype=np.int64), np.full(rows, pts[0, 1], dtype=np.int64))
        )
        taken = np.isin(full[:, 0], pts[:, 0])
    return full[~taken]


def segment_orthogonal(
    v: Volume3D,
    view: str,
    lines: Sequence[PositiveLine],
    segmenter: Segmenter2D,
    cfg: PropagationConfig,
) -> tuple[SliceAddress, np.ndarray, dict[str, list[PositiveLine]]]:
    """Segment the slice of `view` holding the longest projected line.

    The positive prompt is picked from the line's points; negative
    candidates are the line's full in-slice extension minus the run itself.
    Returns the slice address, the binarized mask and its projected lines.
    """
    mine = [l for l in lines if l.view == view]
    if not mine:
        raise ValueError(f"no lines available for view {view!r}")
    best = min(
        mine,
        key=lambda l: (-l.length, l.index, int(l.points[0, 0]), int(l.points[0, 1])),
    )
    addr = SliceAddress(view, best.index)
    img = extract_slice(v, addr)
    pos = select_positive_prompt(best.points, img, cfg.weights, cfg.neighborhood)
    prompts = [PromptPoint(pos[0], pos[1], positive=True)]
    background = _line_extension(best, img.shape)
    if background.shape[0] > 0:
        neg = select_negative_prompt(
            background,
            img,
            cfg.weights,
            cfg.neighborhood,
            cfg.negative_exclusion_fraction,
        )
        prompts.append(PromptPoint(neg[0], neg[1], positive=False))
    mask2d = segmenter(img, prompts) > 0
    return addr, mask2d, project_lines(mask2d, addr)


def _line_voxels(lines: Sequence[PositiveLine]) -> np.ndarray:
    chunks = [
        _pixels_to_voxels(l.view, l.index, l.points[:, 0], l.points[:, 1]) for l in lines
    ]
    return np.vstack(chunks)


def _box_footprint(view: str, lo: np.ndarray, hi: np.ndarray) -> tuple[int, int, int, int]:
    """(row_lo, row_hi, col_lo, col_hi) of the 3D box on slices of `view`."""
    _, r0, c0 = voxel_to_slice(view, tuple(lo))
    _, r1, c1 = voxel_to_slice(view, tuple(hi))
    return min(r0, r1), max(r0, r1), min(c0, c1), max(c0, c1)


def propagate_orientation(
    v: Volume3D,
    view: str,
    lines: Sequence[PositiveLine],
    anchor_index: int,
    segmenter: Segmenter2D,
    cfg: PropagationConfig,
    tick: Callable[[], None] | None = None,
) -> Volume3D:
    """Sweep one orientation: segment sampled slices, interpolate the rest.

    Every ceil(1/density)-th slice of the lines' bounding box is segmented
    (the anchor slice always is), prompted positively from the line points
    falling in it and negatively from pixels outside the box footprint.
    Sampled slices without line points are skipped. Skipped and unsampled
    in-box slices are linearly interpolated between their segmented
    neighbors (clamped at the ends); out-of-box slices get logit -1.
    """
    if not lines:
        raise ValueError("propagation requires at least one line")
    vox = _line_voxels(lines)
    lo, hi = vox.min(axis=0), vox.max(axis=0)
    axis = VIEW_AXIS[view]
    first, last = int(lo[axis]), int(hi[axis])

    step = math.ceil(1.0 / cfg.slice_density)
    sampled = set(range(first, last + 1, step))
    if first <= anchor_index <= last:
        sampled.add(anchor_index)

    hosted: dict[int, list[np.ndarray]] = {}
    for line in lines:
        if line.view == view:
            hosted.setdefault(line.index, []).append(line.points)

    shape = slice_shape(v.dims, view)
    r0, r1, c0, c1 = _box_footprint(view, lo, hi)
    rows, cols = np.indices(shape)
    outside = (rows < r0) | (rows > r1) | (cols < c0) | (cols > c1)
    background = np.column_stack((rows[outside], cols[outside])).astype(np.int64)

    out = np.full(v.dims, -1.0)
    segmented: list[int] = []
    for k in sorted(sampled):
        if k not in hosted:
            continue
        candidates = np.vstack(hosted[k])
        img = extract_slice(v, SliceAddress(view, k))
        pos = select_positive_prompt(candidates, img, cfg.weights, cfg.neighborhood)
        prompts = [PromptPoint(pos[0], pos[1], positive=True)]
        if background.shape[0] > 0:
            neg = select_negative_prompt(
                background,
                img,
                cfg.weights,
                cfg.neighborhood,
                cfg.negative_exclusion_fraction,
            )
            prompts.append(PromptPoint(neg[0], neg[1], positive=False))
        place_slice(out, view, k, segmenter(img, prompts))
        segmented.append(k)
        if tick is not None:
            tick()

    if segmented:
        planes = {k: _axis_plane(out, axis, k).copy() for k in segmented}
        for k in range(first, last + 1):
            if k in planes:
                continue
            below = [s for s in segmented if s < k]
            above = [s for s in segmented if s > k]
            if below and above:
                a, b = below[-1], above[0]
                t = (k - a) / (b - a)
                plane = (1.0 - t) * planes[a] + t * planes[b]
            elif below:
                plane = planes[below[-1]]
            else:
                plane = planes[above[0]]
            _axis_plane(out, axis, k)[...] = plane
    return Volume3D(out, v.spacing, v.origin)


def _axis_plane(arr: np.ndarray, axis: int, k: int) -> np.ndarray:
    sl: list = [slice(None)] * 3
    sl[axis] = k
    return arr[tuple(sl)]


def fuse_and_binarize(orientations: Sequence[Volume3D], cfg: PropagationConfig) -> Mask3D:
    """Voxelwise mean of the orientation logits, then threshold at mean plus
    k standard deviations of the fused volume (population statistics,
    strict inequality)."""
    base = orientations[0]
    for other in orientations[1:]:
        if not base.same_geometry(other):
            raise ValueError("orientation volumes disagree on geometry")
    fused = np.mean([o.voxels for o in orientations], axis=0)
    threshold = fused.mean() + cfg.threshold_k * fused.std()
    return Mask3D((fused > threshold).astype(np.uint8), base.spacing, base.origin)


def segment_volume(
    v: Volume3D,
    seed: SliceAddress,
    prompts: Sequence[PromptPoint],
    segmenter: Segmenter2D,
    cfg: PropagationConfig | None = None,
    tick: Callable[[], None] | None = None,
) -> Mask3D:
    """Full prompt propagation from one annotated slice to a 3D mask.

    Segments the seed slice, auto-prompts the longest-line slice of each
    orthogonal view, sweeps all three orientations and fuses them. `tick`,
    when given, is called after every slice segmentation; raising from it
    aborts the run (used for cancellation).
    """
    cfg = cfg or PropagationConfig()
    seed.validate(v.dims)
    img0 = extract_slice(v, seed)
    mask0 = segmenter(img0, list(prompts)) > 0
    if not mask0.any():
        raise NoObjectFoundError("no object found at the seeded slice")
    if tick is not None:
        tick()

    seed_lines = project_lines(mask0, seed)
    anchors = {seed.view: seed.index}
    all_lines = [l for ls in seed_lines.values() for l in ls]
    for view in (w for w in VIEWS if w != seed.view):
        addr, _, projected = segment_orthogonal(v, view, seed_lines[view], segmenter, cfg)
        anchors[view] = addr.index
        all_lines.extend(l for ls in projected.values() for l in ls)
        if tick is not None:
            tick()

    orientations = [
        propagate_orientation(v, view, all_lines, anchors[view], segmenter, cfg, tick)
        for view in VIEWS
    ]
    return fuse_and_binarize(orientations, cfg)
