"""Exponentially segmented patterns (ESP) for mean-load prediction.

A future interval is split into ``n`` consecutive, disjoint segments of
lengths ``b, b, 2b, 4b, ..., b * 2**(n-2)`` (in sampling steps), and each
segment is summarised by its mean load.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SegmentScheme:
    baseline: int
    n: int
    lengths: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.lengths)

    def minutes(self, interval_seconds: int = 300) -> float:
        return self.total * interval_seconds / 60.0

    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.lengths)])


def make_scheme(n: int, b: int = 1) -> SegmentScheme:
    if n < 1:
        raise ValueError("an ESP scheme needs at least one segment")
    if b < 1:
        raise ValueError("baseline segment must be at least one step")
    lengths = (b,) + tuple(b * 2 ** (i - 2) for i in range(2, n + 1))
    return SegmentScheme(b, n, lengths)


def scheme_for_horizon(steps: int, b: int = 1) -> SegmentScheme:
    """Scheme whose total length is exactly ``steps``; rejects non-power-of-two horizons."""
    if steps < b or steps % b:
        raise ValueError(f"horizon {steps} is not a multiple of baseline {b}")
    k = steps // b
    if k & (k - 1):
        raise ValueError(f"horizon {steps} is not baseline * 2**(n-1) for any n")
    return make_scheme(k.bit_length(), b)


def esp_transform(future, scheme: SegmentScheme) -> np.ndarray:
    """Segment means of ``future`` (last axis) under ``scheme``.

    Works on a single future vector or on a batch ``(count, length)``.
    Extra values beyond ``scheme.total`` are ignored.
    """
    future = np.asarray(future, dtype=np.float64)
    if future.shape[-1] < scheme.total:
        raise ValueError(f"need {scheme.total} future values, got {future.shape[-1]}")
    edges = scheme.offsets()
    return np.stack([future[..., edges[k]:edges[k + 1]].mean(axis=-1)
                     for k in range(scheme.n)], axis=-1)
