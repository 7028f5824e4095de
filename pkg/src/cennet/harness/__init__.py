"""Evaluation protocol: ranking, baseline explainer, significance tests, experiments."""

from .baseline import BaselineConfig, baseline_local_linear
from .ranking import RankResult, combo_from_singles, combo_keys, competition_ranks, rank_combo, rank_single
from .stats import mcnemar, welch_t

__all__ = [
    "BaselineConfig", "RankResult", "baseline_local_linear", "combo_from_singles", "combo_keys",
    "competition_ranks", "mcnemar", "rank_combo", "rank_single", "welch_t",
]
