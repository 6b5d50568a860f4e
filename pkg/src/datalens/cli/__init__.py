"""Command-line pipeline: generate, flip, train, score, evaluate, combine, report."""

from __future__ import annotations
