"""Per-tumor feature vectors: extraction order, normalization, persistence.

The canonical order is first-order (18), shape (14), co-occurrence (22),
run length (16), size zone (16), dependence (14) - 100 features total.
Normalization is two-step: shift-log against the training minimum, then
z-score with training statistics; both sets of parameters are fitted on the
training split only and persisted as JSON.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..volume import Volume3D
from .firstorder import FIRST_ORDER_NAMES, first_order
from .preprocess import TumorInstance, preprocess_for_radiomics
from .shape import SHAPE_NAMES, shape_features
from .texture import GLCM_NAMES, GLDM_NAMES, GLRLM_NAMES, GLSZM_NAMES, glcm, gldm, glrlm, glszm

FEATURE_NAMES: tuple[str, ...] = (
    FIRST_ORDER_NAMES + SHAPE_NAMES + GLCM_NAMES + GLRLM_NAMES + GLSZM_NAMES + GLDM_NAMES
)
assert len(FEATURE_NAMES) == 100

META_COLUMNS = ("patient_id", "phase", "instance_id", "diameter_mm", "volume_mm3")


@dataclass(frozen=True)
class NormalizationParams:
    """Training-split statistics for the two-step normalization."""

    minimum: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        width = self.minimum.shape
        if len(width) != 1 or width[0] == 0:
            raise ValueError("parameters must be nonempty vectors")
        for arr in (self.mean, self.std):
            if arr.shape != width:
                raise ValueError("parameter vectors must share one width")
        if np.any(self.std < 0):
            raise ValueError("std must be nonnegative")

    @property
    def width(self) -> int:
        return self.minimum.shape[0]

    def to_json(self, path) -> None:
        payload = {
            "features": list(FEATURE_NAMES) if self.width == len(FEATURE_NAMES) else None,
            "minimum": self.minimum.tolist(),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "NormalizationParams":
        payload = json.loads(Path(path).read_text())
        names = payload.get("features")
        if names is not None and tuple(names) != FEATURE_NAMES:
            raise ValueError("feature names in file do not match this build")
        return cls(
            minimum=np.asarray(payload["minimum"], dtype=np.float64),
            mean=np.asarray(payload["mean"], dtype=np.float64),
            std=np.asarray(payload["std"], dtype=np.float64),
        )


def extract_features(v: Volume3D, instance_mask: np.ndarray) -> np.ndarray:
    """Raw 100-feature vector for one roi on the source grid."""
    dv = preprocess_for_radiomics(v, instance_mask)
    return np.concatenate(
        [
            first_order(dv),
            shape_features(dv.roi, dv.spacing),
            glcm(dv),
            glrlm(dv),
            glszm(dv),
            gldm(dv),
        ]
    )


def extract_all(
    v: Volume3D,
    instances: list[TumorInstance],
    params: "NormalizationParams | None" = None,
) -> dict[tuple[str, str, int], np.ndarray]:
    """Feature vector per instance, keyed by (patient, phase, instance id).

    Vectors are normalized when params are given, raw otherwise.
    """
    out = {}
    for t in sorted(instances, key=lambda t: (t.patient_id, t.phase, t.instance_id)):
        feats = extract_features(v, t.mask)
        if params is not None:
            feats = two_step_normalize(feats, params)
        out[(t.patient_id, t.phase, t.instance_id)] = feats
    return out


def fit_normalization(train_features: np.ndarray) -> NormalizationParams:
    """Fit shift-log + z-score parameters on the training feature matrix."""
    train = np.asarray(train_features, dtype=np.float64)
    if train.ndim != 2 or train.shape[0] == 0:
        raise ValueError("expected a nonempty (n, features) training matrix")
    minimum = train.min(axis=0)
    logged = np.log(train - minimum + 1.0)
    return NormalizationParams(
        minimum=minimum, mean=logged.mean(axis=0), std=logged.std(axis=0)
    )


def two_step_normalize(features: np.ndarray, params: NormalizationParams) -> np.ndarray:
    """ln(f - train_min + 1), then z-score with training statistics.

    Values below the training minimum clamp to it; features constant on the
    training split map to 0.
    """
    f = np.asarray(features, dtype=np.float64)
    logged = np.log(np.maximum(f - params.minimum, 0.0) + 1.0)
    out = np.zeros_like(logged)
    nonconstant = params.std > 0
    out[..., nonconstant] = (
        logged[..., nonconstant] - params.mean[nonconstant]
    ) / params.std[nonconstant]
    return out


def write_feature_table(path, rows: list[tuple[TumorInstance, np.ndarray]]) -> None:
    """CSV with instance metadata columns followed by the 100 features."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(META_COLUMNS + FEATURE_NAMES)
        for t, feats in rows:
            writer.writerow(
                [t.patient_id, t.phase, t.instance_id, repr(t.diameter_mm), repr(t.volume_mm3)]
                + [repr(float(x)) for x in feats]
            )


def read_feature_table(path) -> list[dict]:
    """Rows as dicts: metadata fields plus a 'features' array."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != META_COLUMNS + FEATURE_NAMES:
            raise ValueError("unexpected feature table header")
        for row in reader:
            out.append(
                {
                    "patient_id": row[0],
                    "phase": row[1],
                    "instance_id": int(row[2]),
                    "diameter_mm": float(row[3]),
                    "volume_mm3": float(row[4]),
                    "features": np.asarray([float(x) for x in row[5:]], dtype=np.float64),
                }
            )
    return out
