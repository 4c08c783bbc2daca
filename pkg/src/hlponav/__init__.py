"""Landmark-guided hierarchical object-goal navigation on procedural 2D scenes."""

__version__ = "0.1.0"
