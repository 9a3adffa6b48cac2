"""Deterministic CONGEST-model simulator for exact weighted APSP."""

__version__ = "0.1.0"
