"""Small statistical helpers: confidence intervals and a calibrated
two-sample distribution test.

The two-sample statistic is the max ECDF distance.  Its null
distribution for continuous data does not depend on the underlying law,
so thresholds are calibrated once per sample-size pair by simulating
same-law (uniform) pairs with the keyed generator; the calibration is
deterministic given its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .randomness import keyed_uniform

Z99 = 2.58  # two-sided 99% normal quantile, used for all reported CIs


def mean_ci(values, z: float = Z99):
    """(mean, z * std / sqrt(n)) with ddof=1; half-width 0 for n < 2."""
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(values.mean()) if n else math.nan
    if n < 2:
        return mean, 0.0
    return mean, z * float(values.std(ddof=1)) / math.sqrt(n)


def max_ecdf_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


@lru_cache(maxsize=64)
def calibrated_ecdf_threshold(n1: int, n2: int, quantile: float = 0.99,
                              n_pairs: int = 500, seed: int = 2026) -> float:
    """Same-law quantile of the max ECDF distance for sizes (n1, n2)."""
    stats = np.empty(n_pairs)
    for k in range(n_pairs):
        a = keyed_uniform(seed, "ecdf-cal", k, 0, np.arange(n1))
        b = keyed_uniform(seed, "ecdf-cal", k, 1, np.arange(n2))
        stats[k] = max_ecdf_distance(a, b)
    return float(np.quantile(stats, quantile))


@dataclass(frozen=True)
class TwoSampleResult:
    statistic: float
    threshold: float
    n1: int
    n2: int

    @property
    def same_law(self) -> bool:
        return self.statistic <= self.threshold


def two_sample_test(a, b, quantile: float = 0.99) -> TwoSampleResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    stat = max_ecdf_distance(a, b)
    thr = calibrated_ecdf_threshold(a.size, b.size, quantile=quantile)
    return TwoSampleResult(statistic=stat, threshold=thr, n1=a.size, n2=b.size)
