"""Causal explanations for small neural-network classifiers on tabular data."""

__version__ = "0.1.0"
