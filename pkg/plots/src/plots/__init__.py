"""Deterministic SVG figures for dualspace CSV artifacts."""

__version__ = "0.1.0"
