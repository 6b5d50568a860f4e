"""Which methods catch which flipped samples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from datalens.errors import ConfigError
from datalens.harness.ranking import _check, inspected_count


@dataclass(frozen=True, eq=False)
class DetectionDiff:
    samples: np.ndarray     # flipped train indices inside the window
    methods: tuple[str, ...]
    detected: np.ndarray    # (len(samples), len(methods)) bool

    def union(self) -> np.ndarray:
        return self.detected.any(axis=1)

    def rows(self) -> list[dict]:
        return [{"sample_index": int(s), **{m: int(d) for m, d in zip(self.methods, row)}}
                for s, row in zip(self.samples, self.detected)]


def detection_diff(rankings: Mapping[str, np.ndarray], flip_mask: np.ndarray, ratio: float,
                   window: tuple[int, int] | None = None) -> DetectionDiff:
    """Detection matrix for the flipped samples with index in ``[start, stop)``."""
    flip_mask = np.asarray(flip_mask, dtype=bool)
    n = len(flip_mask)
    start, stop = (0, n) if window is None else (int(window[0]), int(window[1]))
    if not 0 <= start <= stop <= n:
        raise ConfigError(f"window {window} outside [0, {n}]")
    samples = np.flatnonzero(flip_mask[start:stop]) + start
    methods = tuple(rankings)
    k = inspected_count(n, ratio)
    cols = []
    for m in methods:
        r, _ = _check(rankings[m], flip_mask)
        top = np.zeros(n, dtype=bool)
        top[r[:k]] = True
        cols.append(top[samples])
    detected = np.stack(cols, axis=1) if cols else np.zeros((len(samples), 0), dtype=bool)
    return DetectionDiff(samples, methods, detected)
