"""Rank training samples of small time-series classifiers by how likely their labels are wrong."""

__version__ = "0.1.0"
