"""Retraining experiments: correct or delete the inspected samples, then retrain."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from datalens.errors import ExperimentError, MetricError
from datalens.harness.ranking import _check, inspected_count
from datalens.model.architecture import ArchitectureSpec
from datalens.model.training import TrainConfig, accuracy, train

DEFAULT_REPEATS = 10


def derive_seeds(base: int, repeats: int) -> list[int]:
    """Distinct, reproducible training seeds for repeated runs."""
    return [int(s) for s in np.random.SeedSequence(int(base)).generate_state(repeats)]


@dataclass(frozen=True)
class AccuracyStats:
    accuracies: tuple[float, ...]
    seeds: tuple[int, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "accuracies": list(self.accuracies),
                "seeds": list(self.seeds)}


@dataclass(frozen=True)
class ExperimentResult:
    kind: str
    ratio: float
    inspected: int
    changed: int          # labels restored (correction) or samples removed (deletion)
    flips_remaining: int
    stats: AccuracyStats
    baseline: AccuracyStats | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "ratio": self.ratio, "inspected": self.inspected,
             "changed": self.changed, "flips_remaining": self.flips_remaining,
             **{f"accuracy_{k}": v for k, v in self.stats.to_dict().items()}}
        if self.baseline is not None:
            d.update({f"baseline_{k}": v for k, v in self.baseline.to_dict().items()})
        d.update(self.meta)
        return d


def retrain_accuracy(dataset, spec: ArchitectureSpec, cfg: TrainConfig,
                     repeats: int = DEFAULT_REPEATS) -> AccuracyStats:
    """Test accuracy (true labels) of ``repeats`` retrainings with derived seeds."""
    if repeats < 1:
        raise ExperimentError("repeats must be >= 1")
    counts = np.bincount(dataset.split_arrays("train")[1], minlength=dataset.num_classes)
    if np.any(counts == 0):
        empty = [int(c) for c in np.flatnonzero(counts == 0)]
        raise ExperimentError(f"train split has no samples of class(es) {empty}")
    Xt, yt = dataset.split_arrays("test", labels="true")
    seeds = derive_seeds(cfg.seed, repeats)
    accs = []
    for s in seeds:
        model, _ = train(dataset, spec, cfg.with_seed(s))
        accs.append(accuracy(model, Xt, yt))
    return AccuracyStats(tuple(accs), tuple(seeds))


def _inspected(dataset, ranking, ratio):
    fm = dataset.train_flip_mask()
    ranking, fm = _check(ranking, fm)
    if not fm.any():
        raise MetricError("the experiment needs flipped labels in the train split")
    k = inspected_count(len(ranking), ratio)
    return ranking[:k], fm


def corrected_dataset(dataset, ranking: np.ndarray, ratio: float):
    """Restore true labels on the flipped samples among the top of the ranking."""
    top, fm = _inspected(dataset, ranking, ratio)
    hit = top[fm[top]]
    rows = dataset.indices("train")[hit]
    observed = dataset.observed_labels.copy()
    observed[rows] = dataset.true_labels[rows]
    meta = {**dataset.meta, "corrected": int(len(rows))}
    return dataset.replace(observed_labels=observed, meta=meta), len(top), len(rows)


def deleted_dataset(dataset, ranking: np.ndarray, ratio: float):
    """Drop every inspected sample from the train split."""
    top, _ = _inspected(dataset, ranking, ratio)
    keep = np.ones(len(dataset), dtype=bool)
    keep[dataset.indices("train")[top]] = False
    out = dataset.subset(np.flatnonzero(keep))
    counts = np.bincount(out.split_arrays("train")[1], minlength=dataset.num_classes)
    if np.any(counts == 0):
        empty = [int(c) for c in np.flatnonzero(counts == 0)]
        raise ExperimentError(f"deletion at ratio {ratio} leaves class(es) {empty} without samples")
    return out, len(top), len(top)


def _run(kind, build, dataset, ranking, ratio, spec, cfg, repeats, baseline):
    changed_ds, inspected, changed = build(dataset, ranking, ratio)
    stats = retrain_accuracy(changed_ds, spec, cfg, repeats)
    if baseline is True:
        baseline = retrain_accuracy(dataset, spec, cfg, repeats)
    elif baseline is False:
        baseline = None
    return ExperimentResult(kind, float(ratio), inspected, changed,
                            int(changed_ds.train_flip_mask().sum()), stats, baseline)


def correction_experiment(dataset, ranking: np.ndarray, ratio: float, spec: ArchitectureSpec,
                          cfg: TrainConfig, repeats: int = DEFAULT_REPEATS,
                          baseline: AccuracyStats | bool = True) -> ExperimentResult:
    """``baseline`` may be a precomputed :class:`AccuracyStats` (same cfg and repeats) or a flag."""
    return _run("correction", corrected_dataset, dataset, ranking, ratio, spec, cfg, repeats, baseline)


def deletion_experiment(dataset, ranking: np.ndarray, ratio: float, spec: ArchitectureSpec,
                        cfg: TrainConfig, repeats: int = DEFAULT_REPEATS,
                        baseline: AccuracyStats | bool = True) -> ExperimentResult:
    return _run("deletion", deleted_dataset, dataset, ranking, ratio, spec, cfg, repeats, baseline)
