"""G-squared (likelihood-ratio) conditional independence test for discrete data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import chi2

from ..errors import DataError


@dataclass(frozen=True)
class CiTestResult:
    g2: float
    dof: int
    p_value: float
    independent: bool

    @property
    def informative(self) -> bool:
        return self.dof > 0


def _codes(col) -> tuple[np.ndarray, int]:
    arr = np.asarray(col)
    if arr.dtype.kind in "iu" and (arr.size == 0 or arr.min() >= 0):
        return arr.astype(np.int64), int(arr.max()) + 1 if arr.size else 0
    uniq, inv = np.unique(arr, return_inverse=True)
    return inv.astype(np.int64), len(uniq)


def _strata(cond: Sequence) -> np.ndarray | None:
    if not cond:
        return None
    key = np.zeros(len(cond[0]), dtype=np.int64)
    for col in cond:
        codes, k = _codes(col)
        key = key * k + codes
    _, inv = np.unique(key, return_inverse=True)
    return inv.reshape(-1)


def g2_statistic(a, b, cond: Sequence = ()) -> tuple[float, int]:
    """G² summed over conditioning strata and its adjusted degrees of freedom.

    Within each stratum the dof is (r - 1)(c - 1) where r and c count the
    non-empty rows and columns; empty strata contribute nothing.
    """
    a_codes, ka = _codes(a)
    b_codes, kb = _codes(b)
    n = len(a_codes)
    if n == 0:
        raise DataError("cannot test independence on empty data")
    if len(b_codes) != n or any(len(c) != n for c in cond):
        raise DataError("columns must have equal length")
    strata = _strata(list(cond))
    n_strata = 1 if strata is None else int(strata.max()) + 1
    key = a_codes * kb + b_codes
    if strata is not None:
        key = key + strata * (ka * kb)
    table = np.bincount(key, minlength=n_strata * ka * kb).reshape(n_strata, ka, kb).astype(np.float64)
    rows = table.sum(axis=2)
    cols = table.sum(axis=1)
    totals = rows.sum(axis=1)
    expected = rows[:, :, None] * cols[:, None, :] / np.maximum(totals, 1.0)[:, None, None]
    mask = table > 0
    g2 = 2.0 * float(np.sum(table[mask] * np.log(table[mask] / expected[mask])))
    dof_per = ((rows > 0).sum(axis=1) - 1) * ((cols > 0).sum(axis=1) - 1)
    dof = int(np.clip(dof_per, 0, None).sum())
    return max(g2, 0.0), dof


def g2_test(a, b, cond: Sequence = (), alpha: float = 0.01) -> CiTestResult:
    """Test a ⫫ b | cond on discrete columns at level ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must be in (0, 1)")
    g2, dof = g2_statistic(a, b, cond)
    p = float(chi2.sf(g2, dof)) if dof > 0 else 1.0
    return CiTestResult(g2=g2, dof=dof, p_value=p, independent=p > alpha)
