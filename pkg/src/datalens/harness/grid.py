"""Experiment grid: JSON config schema and the in-memory runner for one cell.

A cell is one (dataset, flip rate, seed) combination. The seed drives data
generation, label flipping, training and the random baseline, so every cell
is reproducible from the config alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from datalens.data import (
    DelimitedSchema,
    FlipSpec,
    flip_labels,
    generate_anomaly_dataset,
    generate_multiclass_dataset,
    load_splits,
)
from datalens.errors import ConfigError
from datalens.harness.combine import PRESETS, CombinationSpec, combine
from datalens.harness.diff import DetectionDiff, detection_diff
from datalens.harness.experiments import (
    AccuracyStats,
    ExperimentResult,
    correction_experiment,
    deletion_experiment,
    retrain_accuracy,
)
from datalens.harness.ranking import (
    TABLE_COLUMNS,
    InspectionResult,
    default_ratios,
    inspection_curve,
    parse_ranking,
    rank,
)
from datalens.harness.timing import TimingEntry, timing_report
from datalens.model import ArchitectureSpec, ConvBlock, TrainConfig, accuracy, train
from datalens.scoring import METHODS, InfluenceConfig, RepresenterConfig, ScoreVector


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DatasetConfig(_Strict):
    name: str
    source: Literal["anomaly", "multiclass", "delimited"] = "anomaly"
    n_train: int = Field(4500, ge=1)
    n_val: int = Field(500, ge=1)
    n_test: int = Field(1000, ge=1)
    length: int = Field(50, ge=8)
    channels: int = Field(3, ge=1)
    num_classes: int = Field(2, ge=2)
    paths: dict[str, str] = Field(default_factory=dict)
    header: Optional[bool] = None

    @model_validator(mode="after")
    def _check(self):
        if self.source == "anomaly" and self.num_classes != 2:
            raise ValueError("the anomaly generator is binary; num_classes must be 2")
        if self.source == "delimited":
            if "train" not in self.paths:
                raise ValueError("delimited datasets need at least a 'train' path")
            bad = set(self.paths) - {"train", "validation", "test"}
            if bad:
                raise ValueError(f"unknown split names {sorted(bad)}")
        return self


class ArchitectureConfig(_Strict):
    conv_blocks: list[tuple[int, int, int]] = Field(default_factory=lambda: [(16, 5, 2), (32, 5, 2)])
    dense_units: int = Field(0, ge=0)


class ExperimentsConfig(_Strict):
    correction: bool = False
    deletion: bool = False
    ranking: str = "loss"
    ratios: list[float] = Field(default_factory=lambda: [0.1])
    repeats: int = Field(10, ge=1)
    baseline: bool = True

    @field_validator("ranking")
    @classmethod
    def _ranking(cls, v):
        parse_ranking(v)
        return v


class DiffConfig(_Strict):
    ratio: float = Field(0.1, gt=0, le=1)
    window: Optional[tuple[int, int]] = None
    rankings: list[str] = Field(default_factory=lambda: ["influence_absolute", "representer_high", "loss"])


class GridConfig(_Strict):
    name: str = "grid"
    datasets: list[DatasetConfig]
    flip_rates: list[float] = Field(default_factory=lambda: [0.1])
    inspection_ratios: list[float] = Field(default_factory=lambda: [0.1, 0.25, 0.5])
    curve_step: float = Field(0.01, gt=0, le=1)
    methods: list[str] = Field(default_factory=lambda: list(METHODS))
    rankings: Optional[list[str]] = None
    combinations: list[str | dict] = Field(default_factory=list)
    seeds: list[int] = Field(default_factory=lambda: [0])
    train: dict = Field(default_factory=dict)
    architecture: ArchitectureConfig = Field(default_factory=ArchitectureConfig)
    influence: dict = Field(default_factory=dict)
    representer: dict = Field(default_factory=dict)
    experiments: ExperimentsConfig = Field(default_factory=ExperimentsConfig)
    detection_diff: Optional[DiffConfig] = None
    timing: bool = True
    histogram_bins: int = Field(40, ge=1)

    @field_validator("flip_rates")
    @classmethod
    def _rates(cls, v):
        if not v or any(not 0 < r < 1 for r in v):
            raise ValueError("flip rates must lie in (0, 1)")
        return v

    @field_validator("inspection_ratios")
    @classmethod
    def _ratios(cls, v):
        if not v or any(not 0 < r <= 1 for r in v):
            raise ValueError("inspection ratios must lie in (0, 1]")
        return v

    @field_validator("methods")
    @classmethod
    def _methods(cls, v):
        bad = [m for m in v if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; known: {list(METHODS)}")
        return v

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v or any(s < 0 for s in v):
            raise ValueError("seeds must be a non-empty list of non-negative integers")
        return v

    @model_validator(mode="after")
    def _cross(self):
        # build every typed config now so schema errors surface before computation
        self.train_config()
        self.influence_config()
        self.representer_config()
        names = [d.name for d in self.datasets]
        if not names or len(set(names)) != len(names):
            raise ValueError("datasets must be a non-empty list with unique names")
        for spec in self.ranking_specs():
            if spec.source not in self.methods:
                raise ValueError(f"ranking {spec.label!r} needs method {spec.source!r}")
        for comb in self.combination_specs():
            for c in comb.constituents:
                if c.source not in self.methods:
                    raise ValueError(f"combination {comb.label!r} needs method {c.source!r}")
        if self.experiments.correction or self.experiments.deletion:
            if parse_ranking(self.experiments.ranking).source not in self.methods:
                raise ValueError("experiment ranking needs its method in 'methods'")
        if self.detection_diff:
            for r in self.detection_diff.rankings:
                if parse_ranking(r).source not in self.methods:
                    raise ValueError(f"detection-diff ranking {r!r} needs its method")
        return self

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(**self.train)
        except (TypeError, ConfigError) as e:
            raise ValueError(f"train: {e}") from None

    def influence_config(self) -> InfluenceConfig:
        try:
            return InfluenceConfig(**self.influence)
        except (TypeError, ConfigError) as e:
            raise ValueError(f"influence: {e}") from None

    def representer_config(self) -> RepresenterConfig:
        try:
            return RepresenterConfig(**self.representer)
        except (TypeError, ConfigError) as e:
            raise ValueError(f"representer: {e}") from None

    def ranking_specs(self):
        if self.rankings is None:
            return tuple(s for s in TABLE_COLUMNS if s.source in self.methods)
        return tuple(parse_ranking(r) for r in self.rankings)

    def combination_specs(self) -> tuple[CombinationSpec, ...]:
        out = []
        for c in self.combinations:
            try:
                if isinstance(c, str):
                    labels = PRESETS[c] if c in PRESETS else tuple(c.split("+"))
                    out.append(CombinationSpec.from_labels(labels))
                else:
                    out.append(CombinationSpec.from_labels(c["constituents"], c.get("weights")))
            except (KeyError, ConfigError) as e:
                raise ValueError(f"combination {c!r}: {e}") from None
        return tuple(out)

    def architecture_for(self, dataset) -> ArchitectureSpec:
        return ArchitectureSpec(dataset.channels, dataset.length,
                                tuple(ConvBlock(*b) for b in self.architecture.conv_blocks),
                                self.architecture.dense_units, dataset.num_classes)

    def dataset(self, name: str) -> DatasetConfig:
        for d in self.datasets:
            if d.name == name:
                return d
        raise ConfigError(f"no dataset named {name!r} in the config")

    def cells(self) -> list["Cell"]:
        return [Cell(d.name, r, s) for d in self.datasets for r in self.flip_rates for s in self.seeds]

    def canonical(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def load_config(path) -> GridConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return parse_config(raw)


def parse_config(raw: dict) -> GridConfig:
    try:
        return GridConfig.model_validate(raw)
    except ValidationError as e:
        msgs = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}"
                         for err in e.errors())
        raise ConfigError(f"config schema violation: {msgs}") from None


@dataclass(frozen=True)
class Cell:
    dataset: str
    flip_rate: float
    seed: int

    @property
    def key(self) -> str:
        return f"{self.dataset}/seed{self.seed}/flip{self.flip_rate:g}"

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "flip_rate": self.flip_rate, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "Cell":
        return cls(str(d["dataset"]), float(d["flip_rate"]), int(d["seed"]))


def clean_dataset(cfg: DatasetConfig, seed: int):
    if cfg.source == "anomaly":
        return generate_anomaly_dataset(cfg.n_train, cfg.n_val, cfg.n_test, cfg.length,
                                        cfg.channels, seed)
    if cfg.source == "multiclass":
        return generate_multiclass_dataset(cfg.n_train, cfg.n_val, cfg.n_test, cfg.length,
                                           cfg.channels, cfg.num_classes, seed)
    schema = DelimitedSchema(cfg.channels, cfg.length, cfg.header)
    return load_splits(cfg.paths, schema)


def flipped_dataset(grid: GridConfig, cell: Cell):
    return flip_labels(clean_dataset(grid.dataset(cell.dataset), cell.seed),
                       FlipSpec(cell.flip_rate, seed=cell.seed))


@dataclass
class CellReport:
    cell: Cell
    fingerprint: str
    n_train: int
    n_flipped: int
    model_accuracy: float
    scores: dict[str, ScoreVector]
    detection: dict[str, list[InspectionResult]]       # ranking label -> results at inspection ratios
    curves: dict[str, list[InspectionResult]]
    combined: dict[str, list[InspectionResult]]        # combination label -> results
    timings: list[TimingEntry] = field(default_factory=list)
    diff: DetectionDiff | None = None
    experiments: list[ExperimentResult] = field(default_factory=list)

    def summary(self) -> dict:
        """JSON-ready digest with everything the tables need except wall times."""
        return summarize(self.cell, self.model_accuracy, self.n_train, self.n_flipped,
                         self.detection, self.curves, self.combined, self.experiments,
                         fingerprint=self.fingerprint)


def summarize(cell: Cell, model_accuracy: float, n_train: int, n_flipped: int, detection, curves,
              combined, experiments=(), fingerprint: str = "") -> dict:
    res = lambda d: {k: [r.to_dict() for r in v] for k, v in d.items()}  # noqa: E731
    return {"cell": cell.to_dict(), "fingerprint": fingerprint, "model_accuracy": model_accuracy,
            "n_train": n_train, "n_flipped": n_flipped, "detection": res(detection),
            "curves": res(curves), "combined": res(combined),
            "experiments": [e.to_dict() for e in experiments]}


def evaluate_scores(grid: GridConfig, dataset, scores: dict[str, ScoreVector]):
    fm = dataset.train_flip_mask()
    curve_ratios = default_ratios(grid.curve_step)
    detection, curves = {}, {}
    for spec in grid.ranking_specs():
        order = rank(scores[spec.source], spec)
        detection[spec.label] = inspection_curve(order, fm, grid.inspection_ratios)
        curves[spec.label] = inspection_curve(order, fm, curve_ratios)
    combined = {}
    for comb in grid.combination_specs():
        sv = combine(scores, comb)
        order = rank(sv, parse_ranking("combined"))
        combined[comb.label] = inspection_curve(order, fm, grid.inspection_ratios)
    return detection, curves, combined


def run_cell(grid: GridConfig, cell: Cell, dataset=None) -> CellReport:
    dataset = flipped_dataset(grid, cell) if dataset is None else dataset
    train_cfg = grid.train_config().with_seed(cell.seed)
    arch = grid.architecture_for(dataset)
    model, _ = train(dataset, arch, train_cfg)
    acc = accuracy(model, *dataset.split_arrays("test", labels="true"))
    rep = timing_report(grid.methods, dataset, model, influence=grid.influence_config(),
                        representer=grid.representer_config(), seed=cell.seed)
    scores = rep.scores
    detection, curves, combined = evaluate_scores(grid, dataset, scores)
    fm = dataset.train_flip_mask()
    diff = None
    if grid.detection_diff is not None:
        d = grid.detection_diff
        orders = {r: rank(scores[parse_ranking(r).source], parse_ranking(r)) for r in d.rankings}
        diff = detection_diff(orders, fm, d.ratio, d.window)
    experiments = []
    ex = grid.experiments
    if ex.correction or ex.deletion:
        spec = parse_ranking(ex.ranking)
        order = rank(scores[spec.source], spec)
        base: AccuracyStats | bool = False
        if ex.baseline:
            base = retrain_accuracy(dataset, arch, train_cfg, ex.repeats)
        for r in ex.ratios:
            if ex.correction:
                experiments.append(correction_experiment(dataset, order, r, arch, train_cfg,
                                                         ex.repeats, base))
            if ex.deletion:
                experiments.append(deletion_experiment(dataset, order, r, arch, train_cfg,
                                                       ex.repeats, base))
    return CellReport(cell, dataset.fingerprint(), dataset.size("train"), int(fm.sum()), acc,
                      scores, detection, curves, combined, rep.entries, diff, experiments)


def mean_detection(reports: list[CellReport], label: str, ratio_index: int) -> float:
    return float(np.mean([r.detection[label][ratio_index].detection_rate for r in reports]))
