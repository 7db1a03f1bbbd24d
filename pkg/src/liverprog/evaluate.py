"""Segmentation and detection evaluation.

Voxel overlap (Dice), greedy one-to-one instance matching at a Dice
threshold, lesion-level detection metrics, and the mask cleanup applied
before any evaluation (dropping components that are implausible as liver
lesions).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .instances import connected_components
from .volume import GeometryError, Mask3D

MATCH_DICE_THRESHOLD = 0.1
MIN_LIVER_OVERLAP = 0.5
MIN_COMPONENT_MM3 = 100.0


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice overlap of two binary arrays; two empty masks agree perfectly."""
    if a.shape != b.shape:
        raise GeometryError(f"shape mismatch {a.shape} vs {b.shape}")
    a = a.astype(bool)
    b = b.astype(bool)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching predicted lesions against ground truth."""

    pairs: tuple[tuple[int, int, float], ...]  # (pred id, gt id, dice)
    false_positive_ids: tuple[int, ...]
    false_negative_ids: tuple[int, ...]

    @property
    def true_positives(self) -> int:
        return len(self.pairs)

    @property
    def false_positives(self) -> int:
        return len(self.false_positive_ids)

    @property
    def false_negatives(self) -> int:
        return len(self.false_negative_ids)

    @property
    def precision(self) -> float:
        return _safe_ratio(self.true_positives, self.true_positives + self.false_positives)

    @property
    def recall(self) -> float:
        return _safe_ratio(self.true_positives, self.true_positives + self.false_negatives)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _safe_ratio(num: int, den: int) -> float:
    return 0.0 if den == 0 else num / den


def detection_metrics(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """(precision, recall, f1) from detection counts."""
    precision = _safe_ratio(tp, tp + fp)
    recall = _safe_ratio(tp, tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def match_instances(pred: np.ndarray, gt: np.ndarray) -> MatchResult:
    """Greedy one-to-one matching of labeled instances by descending Dice.

    Candidate pairs need Dice >= 0.1. Ties break toward the lower predicted
    id, then the lower truth id. Unmatched predictions are false positives;
    unmatched truth instances are false negatives.
    """
    if pred.shape != gt.shape:
        raise GeometryError(f"shape mismatch {pred.shape} vs {gt.shape}")
    pred_ids = [int(i) for i in np.unique(pred) if i != 0]
    gt_ids = [int(i) for i in np.unique(gt) if i != 0]

    candidates = []
    for p in pred_ids:
        pm = pred == p
        for g in gt_ids:
            d = dice(pm, gt == g)
            if d >= MATCH_DICE_THRESHOLD:
                candidates.append((-d, p, g))
    candidates.sort()

    matched_pred: set[int] = set()
    matched_gt: set[int] = set()
    pairs = []
    for neg_d, p, g in candidates:
        if p in matched_pred or g in matched_gt:
            continue
        matched_pred.add(p)
        matched_gt.add(g)
        pairs.append((p, g, -neg_d))
    return MatchResult(
        pairs=tuple(pairs),
        false_positive_ids=tuple(p for p in pred_ids if p not in matched_pred),
        false_negative_ids=tuple(g for g in gt_ids if g not in matched_gt),
    )


def postprocess(mask: Mask3D, liver: np.ndarray, label: int) -> Mask3D:
    """Drop predicted components that cannot be liver lesions.

    A connected component of `label` is removed when less than half of it
    lies inside the liver mask or its volume is under 100 mm^3. Idempotent.
    """
    binary = mask.binary(label)
    labels, count = connected_components(binary)
    voxel_mm3 = float(np.prod(mask.spacing))
    liver = liver.astype(bool)
    keep = np.zeros_like(binary)
    for cid in range(1, count + 1):
        component = labels == cid
        size = int(component.sum())
        inside = int((component & liver).sum())
        if inside < MIN_LIVER_OVERLAP * size:
            continue
        if size * voxel_mm3 < MIN_COMPONENT_MM3:
            continue
        keep |= component
    cleaned = mask.labels.copy()
    cleaned[(mask.labels == label) & ~keep] = 0
    return mask.with_labels(cleaned)


def write_match_csv(path, results: dict[str, MatchResult]) -> None:
    """Per-case matching summary as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["case", "tp", "fp", "fn", "precision", "recall", "f1"]
        )
        for case in sorted(results):
            r = results[case]
            writer.writerow(
                [
                    case,
                    r.true_positives,
                    r.false_positives,
                    r.false_negatives,
                    repr(r.precision),
                    repr(r.recall),
                    repr(r.f1),
                ]
            )


def write_match_json(path, results: dict[str, MatchResult]) -> None:
    payload = {
        case: {
            "pairs": [list(p) for p in r.pairs],
            "false_positive_ids": list(r.false_positive_ids),
            "false_negative_ids": list(r.false_negative_ids),
            "precision": r.precision,
            "recall": r.recall,
            "f1": r.f1,
        }
        for case, r in sorted(results.items())
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
