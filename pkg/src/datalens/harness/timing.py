"""Wall time of score computation, excluding model training."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from datalens.scoring import METHODS, InfluenceConfig, RepresenterConfig, ScoreVector, compute_scores


@dataclass(frozen=True)
class TimingEntry:
    method: str
    seconds: float
    settings: dict = field(default_factory=dict)


@dataclass
class TimingReport:
    entries: list[TimingEntry]
    scores: dict[str, ScoreVector]

    def seconds(self, method: str) -> float:
        for e in self.entries:
            if e.method == method:
                return e.seconds
        raise KeyError(method)

    def rows(self) -> list[dict]:
        return [{"method": e.method, "seconds": e.seconds, **e.settings} for e in self.entries]


def timing_report(methods: Sequence[str], dataset, model, *,
                  influence: InfluenceConfig | None = None,
                  representer: RepresenterConfig | None = None, seed: int = 0) -> TimingReport:
    """Time each scoring method once. Loss is reported as 0: its values fall out of evaluation."""
    influence = influence or InfluenceConfig()
    representer = representer or RepresenterConfig()
    entries, scores = [], {}
    for m in methods:
        if m not in METHODS:
            raise KeyError(f"unknown scoring method {m!r}")
        t0 = time.perf_counter()
        sv = compute_scores(m, model, dataset, influence=influence, representer=representer, seed=seed)
        dt = time.perf_counter() - t0
        settings = {k: v for k, v in sv.meta.items() if not isinstance(v, (list, dict))}
        if m == "loss":
            settings["measured_seconds"] = dt
            dt = 0.0
        entries.append(TimingEntry(m, dt, settings))
        scores[m] = sv
    return TimingReport(entries, scores)
