"""Linear combination of rankings after min-max normalisation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from datalens.errors import ConfigError, DimensionError
from datalens.harness.ranking import RankingSpec, parse_ranking, ranking_key
from datalens.scoring.scores import ScoreVector


@dataclass(frozen=True)
class CombinationSpec:
    constituents: tuple[RankingSpec, ...]
    weights: tuple[float, ...] | None = None  # None: uniform

    def __post_init__(self):
        cons = tuple(self.constituents)
        if not cons:
            raise ConfigError("a combination needs at least one constituent")
        w = self.weights
        if w is None:
            w = tuple(1.0 / len(cons) for _ in cons)
        w = tuple(float(x) for x in w)
        if len(w) != len(cons):
            raise ConfigError(f"{len(w)} weights for {len(cons)} constituents")
        if any(not np.isfinite(x) or x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ConfigError(f"weights must be >= 0 and sum to 1, got {w}")
        object.__setattr__(self, "constituents", cons)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_labels(cls, labels: Sequence[str], weights: Sequence[float] | None = None):
        return cls(tuple(parse_ranking(s) for s in labels),
                   None if weights is None else tuple(weights))

    @property
    def label(self) -> str:
        return "+".join(c.label for c in self.constituents)

    def to_dict(self) -> dict:
        return {"constituents": [c.label for c in self.constituents], "weights": list(self.weights)}


def minmax(key: np.ndarray) -> np.ndarray:
    """Affine map onto [0, 1]; a constant key maps to all zeros."""
    key = np.asarray(key, dtype=np.float64)
    lo, hi = float(key.min()), float(key.max())
    if hi == lo:
        return np.zeros_like(key)
    # subtract first, then divide by the span, so the map stays monotone
    return np.clip((key - lo) / (hi - lo), 0.0, 1.0)


def suspicion(scores: ScoreVector, spec: RankingSpec) -> np.ndarray:
    return minmax(ranking_key(scores.values, spec.direction))


def combine(scores: Mapping[str, ScoreVector], spec: CombinationSpec) -> ScoreVector:
    """Weighted sum of normalised suspicion keys, keyed by each constituent's source."""
    n = None
    total = None
    for cons, w in zip(spec.constituents, spec.weights):
        if cons.source not in scores:
            raise ConfigError(f"no score vector for {cons.source!r}")
        sv = scores[cons.source]
        if n is None:
            n = len(sv)
        elif len(sv) != n:
            raise DimensionError(f"score vectors differ in length: {n} vs {len(sv)}")
        part = w * suspicion(sv, cons)
        total = part if total is None else total + part
    return ScoreVector("combined", total, "high = suspicious", False,
                       {"combination": spec.to_dict()})


# Combinations reported for the anomaly and character-trajectory setups
PRESETS: dict[str, tuple[str, ...]] = {
    "loss+classwise_low": ("classwise_low", "loss"),
    "loss+influence_low": ("influence_low", "loss"),
    "loss+representer": ("representer_low", "representer_high", "loss"),
    "loss+classwise_low+influence_high": ("classwise_low", "influence_high", "loss"),
    "loss+influence_low+influence_high": ("influence_low", "influence_high", "loss"),
    "influence_high+loss": ("influence_high", "loss"),
    "influence_high+representer_high": ("influence_high", "representer_high"),
    "loss+classwise_absolute+influence_absolute+representer_high": (
        "classwise_absolute", "influence_absolute", "representer_high", "loss"),
    "loss+classwise_low+classwise_high": ("classwise_low", "classwise_high", "loss"),
}


def preset(name: str) -> CombinationSpec:
    if name not in PRESETS:
        raise ConfigError(f"unknown combination preset {name!r}; known: {sorted(PRESETS)}")
    return CombinationSpec.from_labels(PRESETS[name])
