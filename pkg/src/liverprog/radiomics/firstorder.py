"""First-order statistics of the roi intensity distribution (18 features).

Continuous statistics use the preprocessed intensities; entropy and
uniformity use the discretized level histogram. Moments are population
moments; degenerate ratios (skewness/kurtosis of a constant roi) are 0.
"""

from __future__ import annotations

import numpy as np

from .preprocess import DiscretizedVolume

FIRST_ORDER_NAMES = (
    "firstorder_energy",
    "firstorder_entropy",
    "firstorder_minimum",
    "firstorder_percentile10",
    "firstorder_percentile90",
    "firstorder_maximum",
    "firstorder_mean",
    "firstorder_median",
    "firstorder_interquartile_range",
    "firstorder_range",
    "firstorder_mean_absolute_deviation",
    "firstorder_robust_mean_absolute_deviation",
    "firstorder_root_mean_squared",
    "firstorder_standard_deviation",
    "firstorder_skewness",
    "firstorder_kurtosis",
    "firstorder_variance",
    "firstorder_uniformity",
)


def first_order(dv: DiscretizedVolume) -> np.ndarray:
    x = dv.roi_values.astype(np.float64)
    n = x.size
    mean = x.mean()
    dev = x - mean
    m2 = float((dev**2).mean())
    m3 = float((dev**3).mean())
    m4 = float((dev**4).mean())

    p10, p25, p75, p90 = np.percentile(x, [10, 25, 75, 90])
    robust = x[(x >= p10) & (x <= p90)]
    rmad = float(np.abs(robust - robust.mean()).mean()) if robust.size else 0.0

    counts = np.bincount(dv.roi_levels, minlength=dv.num_levels + 1)[1:]
    p = counts[counts > 0] / n
    entropy = float(-(p * np.log2(p)).sum())
    uniformity = float((p**2).sum())

    skewness = m3 / m2**1.5 if m2 > 0 else 0.0
    kurtosis = m4 / m2**2 if m2 > 0 else 0.0

    return np.array(
        [
            float((x**2).sum()),
            entropy,
            float(x.min()),
            float(p10),
            float(p90),
            float(x.max()),
            float(mean),
            float(np.median(x)),
            float(p75 - p25),
            float(x.max() - x.min()),
            float(np.abs(dev).mean()),
            rmad,
            float(np.sqrt((x**2).mean())),
            float(np.sqrt(m2)),
            skewness,
            kurtosis,
            m2,
            uniformity,
        ]
    )
