"""Rankings over training samples and the detection metrics computed on them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from datalens.errors import ConfigError, DimensionError, MetricError
from datalens.scoring.scores import ScoreVector

DIRECTIONS = ("low_first", "high_first", "absolute_high_first")

# directions that carry meaning for each score family; unknown sources accept all
_ALLOWED = {
    "loss": ("high_first",),
    "random": DIRECTIONS,
    "influence": DIRECTIONS,
    "classwise_influence": DIRECTIONS,
    "representer": ("low_first", "high_first"),
    "combined": ("high_first",),
}


@dataclass(frozen=True)
class RankingSpec:
    source: str
    direction: str = "high_first"

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"unknown ranking direction {self.direction!r}")
        allowed = _ALLOWED.get(self.source, DIRECTIONS)
        if self.direction not in allowed:
            raise ConfigError(f"direction {self.direction!r} is not meaningful for {self.source!r}; "
                              f"use one of {allowed}")

    @property
    def label(self) -> str:
        short = {"low_first": "low", "high_first": "high", "absolute_high_first": "absolute"}
        if self.source in ("loss", "random", "combined"):
            return self.source
        name = {"classwise_influence": "classwise", "influence": "influence",
                "representer": "representer"}.get(self.source, self.source)
        return f"{name}_{short[self.direction]}"

    def to_dict(self) -> dict:
        return {"source": self.source, "direction": self.direction}


# Column order of the detection table
TABLE_COLUMNS: tuple[RankingSpec, ...] = (
    RankingSpec("classwise_influence", "low_first"),
    RankingSpec("classwise_influence", "high_first"),
    RankingSpec("classwise_influence", "absolute_high_first"),
    RankingSpec("influence", "low_first"),
    RankingSpec("influence", "high_first"),
    RankingSpec("influence", "absolute_high_first"),
    RankingSpec("representer", "low_first"),
    RankingSpec("representer", "high_first"),
    RankingSpec("loss", "high_first"),
    RankingSpec("random", "high_first"),
)


def parse_ranking(label: str) -> RankingSpec:
    """Inverse of :attr:`RankingSpec.label`, e.g. ``"classwise_low"``."""
    for spec in TABLE_COLUMNS:
        if spec.label == label:
            return spec
    if label == "combined":
        return RankingSpec("combined")
    raise ConfigError(f"unknown ranking {label!r}; known: {[s.label for s in TABLE_COLUMNS]}")


def ranking_key(values: np.ndarray, direction: str) -> np.ndarray:
    """Key where larger means inspected earlier."""
    v = np.asarray(values, dtype=np.float64)
    if direction == "high_first":
        return v.copy()
    if direction == "low_first":
        return -v
    if direction == "absolute_high_first":
        return np.abs(v)
    raise ConfigError(f"unknown ranking direction {direction!r}")


def order_by_key(key: np.ndarray) -> np.ndarray:
    """Descending key, ties by ascending index."""
    key = np.asarray(key, dtype=np.float64)
    if not np.all(np.isfinite(key)):
        raise DimensionError("ranking keys must be finite")
    # -0.0 and 0.0 compare equal, so the stable sort keeps index order for ties
    return np.argsort(-key, kind="stable")


def rank(scores: ScoreVector | np.ndarray, spec: RankingSpec) -> np.ndarray:
    values = scores.values if isinstance(scores, ScoreVector) else scores
    return order_by_key(ranking_key(values, spec.direction))


def inspected_count(n: int, ratio: float) -> int:
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"inspection ratio must lie in [0, 1], got {ratio}")
    # guard against 0.1 * 4500 = 450.00000000000006 style round-up
    return min(n, math.ceil(ratio * n - 1e-9))


def _check(ranking: np.ndarray, flip_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ranking = np.asarray(ranking, dtype=np.int64)
    flip_mask = np.asarray(flip_mask, dtype=bool)
    n = len(flip_mask)
    if ranking.shape != (n,) or not np.array_equal(np.sort(ranking), np.arange(n)):
        raise DimensionError(f"ranking must be a permutation of {n} train indices")
    return ranking, flip_mask


@dataclass(frozen=True, eq=False)
class InspectionResult:
    inspection_ratio: float
    inspected: np.ndarray
    detected: int
    total_flips: int

    @property
    def detection_rate(self) -> float:
        return self.detected / self.total_flips

    def to_dict(self) -> dict:
        return {"inspection_ratio": self.inspection_ratio, "inspected": int(len(self.inspected)),
                "detected": self.detected, "total_flips": self.total_flips,
                "detection_rate": self.detection_rate}


def inspect(ranking: np.ndarray, flip_mask: np.ndarray, ratio: float) -> InspectionResult:
    ranking, flip_mask = _check(ranking, flip_mask)
    total = int(flip_mask.sum())
    if total == 0:
        raise MetricError("detection rate is undefined without flipped labels")
    if not 0.0 < ratio <= 1.0:
        raise ConfigError(f"inspection ratio must lie in (0, 1], got {ratio}")
    top = ranking[:inspected_count(len(ranking), ratio)]
    return InspectionResult(float(ratio), top, int(flip_mask[top].sum()), total)


def detection_rate(ranking: np.ndarray, flip_mask: np.ndarray, ratio: float) -> float:
    return inspect(ranking, flip_mask, ratio).detection_rate


def inspection_curve(ranking: np.ndarray, flip_mask: np.ndarray,
                     ratios: Iterable[float]) -> list[InspectionResult]:
    """Detection at each ratio, all read off one cumulative pass over the ranking."""
    ranking, flip_mask = _check(ranking, flip_mask)
    total = int(flip_mask.sum())
    if total == 0:
        raise MetricError("detection rate is undefined without flipped labels")
    hits = np.concatenate([[0], np.cumsum(flip_mask[ranking])])
    out = []
    for r in ratios:
        if not 0.0 < r <= 1.0:
            raise ConfigError(f"inspection ratio must lie in (0, 1], got {r}")
        k = inspected_count(len(ranking), r)
        out.append(InspectionResult(float(r), ranking[:k], int(hits[k]), total))
    return out


def default_ratios(step: float = 0.01) -> list[float]:
    m = int(round(1 / step))
    return [round(i * step, 10) for i in range(1, m + 1)]


def rankings_for(scores: dict[str, ScoreVector], specs: Sequence[RankingSpec]) -> dict[str, np.ndarray]:
    return {s.label: rank(scores[s.source], s) for s in specs}
