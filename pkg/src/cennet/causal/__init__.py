"""Constraint-based causal analysis of last-hidden-layer neurons."""

from .citest import CiTestResult, g2_statistic, g2_test
from .discovery import CausalReport, discretize_neurons, global_explain, neuron_names
from .oracles import (
    conditional_entropy,
    d_separated,
    entropy,
    exact_joint,
    marginal,
    min_cond_entropy,
    valid_supersets,
)
from .skeleton import Skeleton, extract_ccv, skeleton_search

__all__ = [
    "CausalReport", "CiTestResult", "Skeleton", "conditional_entropy", "d_separated",
    "discretize_neurons", "entropy", "exact_joint", "extract_ccv", "g2_statistic", "g2_test",
    "global_explain", "marginal", "min_cond_entropy", "neuron_names", "skeleton_search",
    "valid_supersets",
]
