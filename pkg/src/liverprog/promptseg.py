"""Point-prompted 2D segmentation.

The propagation engine only ever talks to a ``Segmenter2D``: a callable that
maps one slice image plus point prompts to a per-pixel logit map. Anything
honoring that contract can be swapped in through the registry, including
learned models. The built-in reference is a deterministic region grower, so
the rest of the toolkit can be exercised without model weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy import ndimage

GROW_TOLERANCE_FRACTION = 0.25
GROW_SHRINK_FACTOR = 0.5
GROW_MAX_ATTEMPTS = 8

_STRUCT_4 = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class PromptPoint:
    """One click on a slice, in (row, col) pixel coordinates."""

    row: int
    col: int
    positive: bool = True


class Segmenter2D(Protocol):
    def __call__(
        self, image: np.ndarray, prompts: Sequence[PromptPoint]
    ) -> np.ndarray: ...


def _check_prompts(image: np.ndarray, prompts: Sequence[PromptPoint]) -> None:
    rows, cols = image.shape
    for p in prompts:
        if not (0 <= p.row < rows and 0 <= p.col < cols):
            raise ValueError(f"prompt {p} outside {rows}x{cols} slice")
    if not any(p.positive for p in prompts):
        raise ValueError("at least one positive prompt is required")


def _grow(image: np.ndarray, seeds: Sequence[PromptPoint], tol: float) -> np.ndarray:
    """Union of 4-connected floods, one per seed, each keyed to its own
    seed intensity: pixel admitted when |I - I(seed)| <= tol."""
    region = np.zeros(image.shape, dtype=bool)
    for s in seeds:
        admissible = np.abs(image - image[s.row, s.col]) <= tol
        labels, _ = ndimage.label(admissible, structure=_STRUCT_4)
        region |= labels == labels[s.row, s.col]
    return region


def region_grow_segmenter(
    image: np.ndarray, prompts: Sequence[PromptPoint]
) -> np.ndarray:
    """Reference segmenter: tolerance-halving region grow.

    Starts with tolerance = 0.25 * slice intensity range and grows from every
    positive prompt. If the grown region swallows a negative prompt the
    tolerance is halved and the grow repeated, up to 8 attempts; if the
    region is still dirty after that, only the positive seed pixels survive.
    Output logits are +1 inside the region and -1 outside.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected a 2D slice, got shape {image.shape}")
    _check_prompts(image, prompts)
    seeds = [p for p in prompts if p.positive]
    negatives = [p for p in prompts if not p.positive]

    tol = GROW_TOLERANCE_FRACTION * float(image.max() - image.min())
    region = None
    for _ in range(GROW_MAX_ATTEMPTS):
        region = _grow(image, seeds, tol)
        if not any(region[p.row, p.col] for p in negatives):
            break
        tol *= GROW_SHRINK_FACTOR
    else:
        region = np.zeros(image.shape, dtype=bool)
        for s in seeds:
            region[s.row, s.col] = True

    return np.where(region, 1.0, -1.0)


SEGMENTERS: dict[str, Segmenter2D] = {"region-grow": region_grow_segmenter}


def register_segmenter(name: str, segmenter: Segmenter2D) -> None:
    SEGMENTERS[name] = segmenter


def get_segmenter(name: str) -> Segmenter2D:
    try:
        return SEGMENTERS[name]
    except KeyError:
        known = ", ".join(sorted(SEGMENTERS))
        raise KeyError(f"unknown segmenter {name!r}; registered: {known}") from None
