"""Rank-based scoring of explanation methods against known important variables."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from ..datagen.synthetic import GroundTruth
from ..errors import DataError


@dataclass
class RankResult:
    per_row: np.ndarray
    n_candidates: int
    top1_ratio: float
    top5_ratio: float
    seconds: float = 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_row))

    @property
    def std(self) -> float:
        return float(np.std(self.per_row))

    def to_json(self, series: bool = True) -> dict:
        doc = {
            "mean": self.mean,
            "std": self.std,
            "top1_ratio": self.top1_ratio,
            "top5_ratio": self.top5_ratio,
            "n_candidates": self.n_candidates,
            "n_rows": int(len(self.per_row)),
        }
        if series:
            doc["per_row"] = [float(v) for v in self.per_row]
        return doc


def competition_ranks(scores: np.ndarray) -> np.ndarray:
    """Rank 1 = highest score; tied scores share the smallest rank."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        scores = scores[None, :]
    sorted_desc = -np.sort(-scores, axis=1)
    ranks = np.empty(scores.shape, dtype=np.int64)
    for i in range(scores.shape[0]):
        ranks[i] = np.searchsorted(-sorted_desc[i], -scores[i], side="left") + 1
    return ranks


def _matrix(scores, keys: Sequence) -> np.ndarray:
    if isinstance(scores, Mapping):
        missing = [k for k in keys if k not in scores]
        if missing:
            raise DataError(f"importance missing for {missing}")
        mat = np.column_stack([np.asarray(scores[k], dtype=np.float64) for k in keys])
        if mat.shape[0] == 0:
            raise DataError("no rows to rank")
        return mat
    mat = np.asarray(scores, dtype=np.float64)
    if mat.ndim == 2 and mat.shape[0] == 0:
        raise DataError("no rows to rank")
    if mat.ndim != 2 or mat.shape[1] != len(keys):
        raise DataError(f"expected a (rows, {len(keys)}) importance matrix, got {mat.shape}")
    return mat


def rank_single(importances, gt: GroundTruth, seconds: float = 0.0) -> RankResult:
    """Mean rank of each row's important variables among all candidates.

    ``importances`` is a mapping candidate -> per-row scores, or a matrix with
    columns in ``gt.candidate_vars`` order. ``gt`` must already be restricted
    to the scored rows.
    """
    cands = list(gt.candidate_vars)
    mat = _matrix(importances, cands)
    ranks = competition_ranks(mat)
    col = {v: j for j, v in enumerate(cands)}
    per_row = np.empty(mat.shape[0])
    hits1 = hits5 = total = 0
    for i in range(mat.shape[0]):
        r = ranks[i, [col[v] for v in gt.set_for_row(i)]]
        per_row[i] = r.mean()
        hits1 += int((r == 1).sum())
        hits5 += int((r <= 5).sum())
        total += len(r)
    return RankResult(per_row=per_row, n_candidates=len(cands), top1_ratio=hits1 / total,
                      top5_ratio=hits5 / total, seconds=seconds)


def combo_keys(candidates: Sequence[str], size: int) -> list[tuple[str, ...]]:
    return list(combinations(candidates, size))


def rank_combo(scores, gt: GroundTruth, size: int, seconds: float = 0.0) -> RankResult:
    """Rank of each row's important set among all ``size``-subsets of the candidates."""
    cands = list(gt.candidate_vars)
    keys = combo_keys(cands, size)
    mat = _matrix(scores, keys)
    ranks = competition_ranks(mat)
    index = {frozenset(k): j for j, k in enumerate(keys)}
    per_row = np.empty(mat.shape[0])
    for i in range(mat.shape[0]):
        target = frozenset(gt.set_for_row(i))
        if len(target) != size:
            raise DataError(f"row {i}: important set {sorted(target)} has size {len(target)}, not {size}")
        per_row[i] = ranks[i, index[target]]
    return RankResult(per_row=per_row, n_candidates=len(keys),
                      top1_ratio=float(np.mean(per_row == 1)), top5_ratio=float(np.mean(per_row <= 5)),
                      seconds=seconds)


def combo_from_singles(importances, candidates: Sequence[str], size: int) -> dict[tuple[str, ...], np.ndarray]:
    """Set importance as the sum of member importances."""
    mat = _matrix(importances, list(candidates))
    col = {v: j for j, v in enumerate(candidates)}
    return {k: mat[:, [col[v] for v in k]].sum(axis=1) for k in combo_keys(candidates, size)}
