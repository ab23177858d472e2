"""Skeleton-aware multi-scale heatmap regression for 2D hand pose."""

__version__ = "0.1.0"
