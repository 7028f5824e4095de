"""Synthetic benchmark generators and Bayesian-network sampling."""

from .network import BUILTIN_MODELS, BayesNet, build_candidates, load_builtin, sample_bn, sample_codes
from .parser import emit_bn, parse_bn
from .synthetic import (
    CATEGORY_TABLE,
    KINDS,
    GroundTruth,
    SyntheticSpec,
    gen_category,
    gen_nonlinear_additive,
    gen_nonlinear_nonadditive,
    generate,
)

__all__ = [
    "BUILTIN_MODELS", "BayesNet", "CATEGORY_TABLE", "GroundTruth", "KINDS", "SyntheticSpec",
    "build_candidates", "emit_bn", "gen_category", "gen_nonlinear_additive",
    "gen_nonlinear_nonadditive", "generate", "load_builtin", "parse_bn", "sample_bn", "sample_codes",
]
