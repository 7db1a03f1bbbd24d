"""Synthetic testbeds with known ground truth.

Two generators: a contrast-phase image phantom (liver and spleen ellipsoids,
spherical tumors, Gaussian noise) whose noise-free labels are computed
analytically at voxel centers, and a survival cohort of tumor feature bags
whose event times follow an exponential model on a known per-patient risk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .milsurv import SurvivalLabel, TumorFeatureBag
from .volume import BACKGROUND, LIVER, Mask3D, SPLEEN, TUMOR, Volume3D


@dataclass(frozen=True)
class Ellipsoid:
    center_mm: tuple[float, float, float]
    semi_axes_mm: tuple[float, float, float]

    def __post_init__(self):
        if any(a <= 0 for a in self.semi_axes_mm):
            raise ValueError("semi-axes must be positive")


@dataclass(frozen=True)
class Sphere:
    center_mm: tuple[float, float, float]
    radius_mm: float

    def __post_init__(self):
        if self.radius_mm <= 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and intensities of a two-phase synthetic scan.

    Intensity pairs are (pre, post) contrast-phase values. Tumors must lie
    inside the liver; any overlap between structures is an error.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    liver: Ellipsoid = Ellipsoid((48.0, 48.0, 48.0), (40.0, 36.0, 32.0))
    spleen: Ellipsoid | None = None
    tumors: tuple[Sphere, ...] = ()
    background_intensity: tuple[float, float] = (0.0, 0.0)
    liver_intensity: tuple[float, float] = (100.0, 140.0)
    spleen_intensity: tuple[float, float] = (90.0, 110.0)
    tumor_intensity: tuple[float, float] = (80.0, 60.0)
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if any(d <= 0 for d in self.dims) or any(s <= 0 for s in self.spacing):
            raise ValueError("dims and spacing must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        extent = tuple(d * s for d, s in zip(self.dims, self.spacing))
        for center, reach in self._reaches():
            for c, r, e in zip(center, reach, extent):
                if c - r < 0 or c + r > e:
                    raise ValueError("structure extends outside the volume")

    def _reaches(self):
        yield self.liver.center_mm, self.liver.semi_axes_mm
        if self.spleen is not None:
            yield self.spleen.center_mm, self.spleen.semi_axes_mm
        for t in self.tumors:
            yield t.center_mm, (t.radius_mm,) * 3


def _voxel_centers(dims, spacing):
    grids = np.meshgrid(
        *[(np.arange(d) + 0.5) * s for d, s in zip(dims, spacing)],
        indexing="ij",
    )
    return grids


def _inside_ellipsoid(grids, e: Ellipsoid) -> np.ndarray:
    q = sum(
        ((g - c) / a) ** 2
        for g, c, a in zip(grids, e.center_mm, e.semi_axes_mm)
    )
    return q <= 1.0


def _inside_sphere(grids, s: Sphere) -> np.ndarray:
    q = sum((g - c) ** 2 for g, c in zip(grids, s.center_mm))
    return q <= s.radius_mm**2


def generate_phantom(spec: PhantomSpec) -> tuple[Volume3D, Volume3D, Mask3D]:
    """Render (pre, post, truth) for a phantom specification."""
    grids = _voxel_centers(spec.dims, spec.spacing)
    liver = _inside_ellipsoid(grids, spec.liver)
    spleen = (
        _inside_ellipsoid(grids, spec.spleen)
        if spec.spleen is not None
        else np.zeros(spec.dims, dtype=bool)
    )
    tumor_masks = [_inside_sphere(grids, t) for t in spec.tumors]

    if np.any(liver & spleen):
        raise ValueError("liver and spleen overlap")
    for i, a in enumerate(tumor_masks):
        if np.any(a & ~liver):
            raise ValueError(f"tumor {i} is not fully inside the liver")
        for b in tumor_masks[:i]:
            if np.any(a & b):
                raise ValueError("tumors overlap")

    tumor = np.zeros(spec.dims, dtype=bool)
    for m in tumor_masks:
        tumor |= m

    labels = np.full(spec.dims, BACKGROUND, dtype=np.uint8)
    labels[spleen] = SPLEEN
    labels[liver] = LIVER
    labels[tumor] = TUMOR
    truth = Mask3D(labels=labels, spacing=spec.spacing, origin=(0.0, 0.0, 0.0))

    rng = np.random.default_rng(spec.seed)
    volumes = []
    for phase in (0, 1):
        image = np.full(spec.dims, spec.background_intensity[phase], dtype=np.float64)
        image[spleen] = spec.spleen_intensity[phase]
        image[liver] = spec.liver_intensity[phase]
        image[tumor] = spec.tumor_intensity[phase]
        if spec.noise_std > 0:
            image = image + rng.normal(0.0, spec.noise_std, size=spec.dims)
        volumes.append(
            Volume3D(voxels=image, spacing=spec.spacing, origin=(0.0, 0.0, 0.0))
        )
    return volumes[0], volumes[1], truth


@dataclass(frozen=True)
class CohortSpec:
    """Survival cohort with a known risk signal.

    Each patient carries between `min_tumors` and `max_tumors` tumors with
    standard normal feature vectors; the patient's true log hazard is the
    maximum over tumors of `risk_scale * features[risk_feature]`. Event
    times are exponential with rate `baseline_rate * exp(risk)`; censoring
    times are uniform, calibrated so the realized censored fraction lands
    near `censoring_fraction`.
    """

    n_patients: int
    feature_dim: int
    min_tumors: int = 1
    max_tumors: int = 5
    risk_feature: int = 0
    risk_scale: float = 1.0
    baseline_rate: float = 0.1
    censoring_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 2:
            raise ValueError("a cohort needs at least two patients")
        if not 1 <= self.min_tumors <= self.max_tumors:
            raise ValueError("invalid tumor count range")
        if not 0 <= self.risk_feature < self.feature_dim:
            raise ValueError("risk_feature out of range")
        if not 0.0 <= self.censoring_fraction < 1.0:
            raise ValueError("censoring_fraction must be in [0, 1)")
        if self.baseline_rate <= 0:
            raise ValueError("baseline_rate must be positive")


def _calibrate_uniform_bound(event_times: np.ndarray, target: float) -> float:
    """Upper bound c so C ~ U(0, c) censors about `target` of the cohort.

    The expected censored fraction, mean_i min(T_i / c, 1), is decreasing
    in c; solved by bisection on the realized event times.
    """
    def censored_fraction(c):
        return float(np.minimum(event_times / c, 1.0).mean())

    lo = float(event_times.max()) * 1e-9
    hi = float(event_times.max())
    while censored_fraction(hi) > target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if censored_fraction(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_cohort(
    spec: CohortSpec,
) -> tuple[list[TumorFeatureBag], list[SurvivalLabel], np.ndarray]:
    """Sample (bags, labels, true risks) for a cohort specification."""
    rng = np.random.default_rng(spec.seed)
    width = len(str(spec.n_patients - 1))
    bags = []
    risks = np.empty(spec.n_patients)
    for i in range(spec.n_patients):
        count = int(rng.integers(spec.min_tumors, spec.max_tumors + 1))
        features = rng.standard_normal((count, spec.feature_dim))
        volumes = rng.uniform(100.0, 5000.0, size=count)
        risks[i] = spec.risk_scale * features[:, spec.risk_feature].max()
        bags.append(
            TumorFeatureBag(
                patient_id=f"p{i:0{width}d}",
                features=features,
                volumes=volumes,
            )
        )

    rates = spec.baseline_rate * np.exp(risks)
    event_times = rng.exponential(1.0 / rates)
    if spec.censoring_fraction == 0.0:
        observed = event_times
        events = np.ones(spec.n_patients, dtype=bool)
    else:
        bound = _calibrate_uniform_bound(event_times, spec.censoring_fraction)
        censor_times = rng.uniform(0.0, bound, size=spec.n_patients)
        events = event_times <= censor_times
        observed = np.where(events, event_times, censor_times)

    labels = [
        SurvivalLabel(time=float(max(t, 1e-12)), event=bool(e))
        for t, e in zip(observed, events)
    ]
    return bags, labels, risks
