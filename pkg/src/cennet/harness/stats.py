"""Two-sample significance tests used to compare explanation methods."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import binom, chi2, t as student_t

from ..errors import DataError


def welch_t(a, b) -> float:
    """Two-sided p-value of Welch's unequal-variance t-test."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise DataError("each sample needs at least two values")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        return 1.0 if diff == 0 else 0.0
    t_stat = diff / math.sqrt(se2)
    dof = se2**2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    return float(min(1.0, 2.0 * student_t.sf(abs(t_stat), dof)))


def mcnemar(b01: int, b10: int) -> float:
    """McNemar p-value from the two discordant counts.

    Exact two-sided binomial below 25 discordant pairs, otherwise the
    continuity-corrected chi-square approximation.
    """
    if b01 < 0 or b10 < 0:
        raise DataError("discordant counts must be non-negative")
    n = b01 + b10
    if n == 0:
        return 1.0
    if n < 25:
        return float(min(1.0, 2.0 * binom.cdf(min(b01, b10), n, 0.5)))
    stat = (abs(b01 - b10) - 1.0) ** 2 / n
    return float(chi2.sf(stat, 1))
