"""Error metrics and distribution summaries used in evaluation reports."""
from __future__ import annotations

import bisect
from typing import NamedTuple

import numpy as np

from .esp import SegmentScheme


def msse(predicted, truth, scheme) -> float:
    """Mean segment squared error: ``sum(s_i * (l_i - L_i)**2) / sum(s_i)``.

    ``scheme`` may be a :class:`SegmentScheme` or a plain sequence of segment lengths.
    """
    lengths = np.asarray(scheme.lengths if isinstance(scheme, SegmentScheme) else scheme,
                         dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.shape != lengths.shape or truth.shape != lengths.shape:
        raise ValueError(f"patterns of length {predicted.shape}/{truth.shape} "
                         f"do not match {len(lengths)} segments")
    return float(np.sum(lengths * (predicted - truth) ** 2) / np.sum(lengths))


def mse(predicted, truth) -> float:
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.shape != truth.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise ValueError("mse of empty sequences")
    return float(np.mean((predicted - truth) ** 2))


def cdf_points(values) -> list[tuple[float, float]]:
    """Empirical CDF evaluated at each distinct value: ``(x, P[X <= x])``."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("cdf of an empty sample")
    xs, counts = np.unique(values, return_counts=True)
    fractions = np.cumsum(counts) / values.size
    fractions[-1] = 1.0
    return [(float(x), float(p)) for x, p in zip(xs, fractions)]


def cdf_lookup(points, x: float) -> float:
    """Fraction of the sample that is <= ``x``, read off ``cdf_points`` output."""
    xs = [p[0] for p in points]
    k = bisect.bisect_right(xs, x)
    return 0.0 if k == 0 else points[k - 1][1]


class BoxplotSummary(NamedTuple):
    min: float
    q1: float
    median: float
    q3: float
    max: float


def boxplot_summary(values) -> BoxplotSummary:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("boxplot of an empty sample")
    q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return BoxplotSummary(*(float(v) for v in q))
