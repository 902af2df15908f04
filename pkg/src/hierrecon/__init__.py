"""Hierarchical time-series forecast reconciliation: linear combiners and tree-ensemble mappings."""

__version__ = "0.1.0"
