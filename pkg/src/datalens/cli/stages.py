"""File-backed pipeline stages. Each reads declared inputs and registers every output."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from datalens.data import FlipSpec, flip_labels, load_dataset, save_dataset
from datalens.data.dataset import manifest_path
from datalens.errors import ArtifactError, ConfigError
from datalens.harness import tables
from datalens.harness.combine import CombinationSpec, combine, preset
from datalens.harness.diff import detection_diff
from datalens.harness.experiments import (
    correction_experiment,
    deletion_experiment,
    retrain_accuracy,
)
from datalens.harness.grid import Cell, clean_dataset, summarize
from datalens.harness.ranking import default_ratios, inspection_curve, parse_ranking, rank
from datalens.model import accuracy, load_model, save_model, train
from datalens.scoring import METHODS, compute_scores, read_scores, write_scores
from datalens.cli import svg
from datalens.cli.workspace import Workspace


def _json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _read_json(path: Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _data_key(dataset: str, seed: int) -> str:
    return f"{dataset}/seed{seed}"


# generate / flip / train ----------------------------------------------------------------

def generate(ws: Workspace, dataset: str, seed: int) -> Path:
    t0 = time.perf_counter()
    ds = clean_dataset(ws.config.dataset(dataset), seed)
    path = ws.clean_path(dataset, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, path)
    ws.register(path, "generate")
    ws.register(manifest_path(path), "generate")
    key = _data_key(dataset, seed)
    ws.add_fingerprint(key, ds.fingerprint())
    ws.stage_done(key, "generate", time.perf_counter() - t0)
    return path


def flip(ws: Workspace, cell: Cell) -> Path:
    t0 = time.perf_counter()
    src = ws.require(ws.clean_path(cell.dataset, cell.seed), _data_key(cell.dataset, cell.seed),
                     "generate")
    ds = flip_labels(load_dataset(src), FlipSpec(cell.flip_rate, seed=cell.seed))
    path = ws.cell_dir(cell) / "dataset.npz"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, path)
    ws.register(path, "flip")
    ws.register(manifest_path(path), "flip")
    ws.add_fingerprint(cell.key, ds.fingerprint())
    ws.stage_done(cell.key, "flip", time.perf_counter() - t0,
                  flipped=int(ds.train_flip_mask().sum()))
    return path


def _dataset(ws: Workspace, cell: Cell):
    return load_dataset(ws.require(ws.cell_dir(cell) / "dataset.npz", cell.key, "flip"))


def _model(ws: Workspace, cell: Cell):
    return load_model(ws.require(ws.cell_dir(cell) / "model.json", cell.key, "train"))


def train_stage(ws: Workspace, cell: Cell) -> Path:
    t0 = time.perf_counter()
    ds = _dataset(ws, cell)
    cfg = ws.config.train_config().with_seed(cell.seed)
    model, history = train(ds, ws.config.architecture_for(ds), cfg)
    d = ws.cell_dir(cell)
    save_model(model, d / "model.json")
    ws.register(d / "model.json", "train")
    rows = [[h.epoch, h.train_loss, h.train_accuracy,
             "" if h.val_loss is None else h.val_loss,
             "" if h.val_accuracy is None else h.val_accuracy] for h in history]
    ws.register(tables.write_rows(d / "history.csv", ["epoch", "train_loss", "train_accuracy",
                                                      "val_loss", "val_accuracy"], rows), "train")
    acc = accuracy(model, *ds.split_arrays("test", labels="true"))
    ws.register(_json(d / "train.json", {"test_accuracy": acc, "num_params": len(model.params),
                                         "train_config": cfg.to_dict(),
                                         "architecture": model.spec.to_dict()}), "train")
    ws.stage_done(cell.key, "train", time.perf_counter() - t0)
    return d / "model.json"


# scores -----------------------------------------------------------------------------------

def score_path(ws: Workspace, cell: Cell, method: str) -> Path:
    return ws.cell_dir(cell) / "scores" / f"{method}.csv"


def score(ws: Workspace, cell: Cell, methods: Sequence[str] | None = None) -> list[Path]:
    methods = list(methods or ws.config.methods)
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown scoring method {m!r}; known: {list(METHODS)}")
    ds, model = _dataset(ws, cell), _model(ws, cell)
    out = []
    for m in methods:
        t0 = time.perf_counter()
        sv = compute_scores(m, model, ds, influence=ws.config.influence_config(),
                            representer=ws.config.representer_config(), seed=cell.seed)
        seconds = 0.0 if m == "loss" else time.perf_counter() - t0
        path = score_path(ws, cell, m)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_scores(sv, path)
        ws.register(path, "score")
        ws.register(path.with_name(path.name + ".meta.json"), "score")
        ws.stage_done(f"{cell.key}/{m}", "score", seconds)
        out.append(path)
    return out


def _scores(ws: Workspace, cell: Cell, methods: Sequence[str]) -> dict:
    return {m: read_scores(ws.require(score_path(ws, cell, m), f"{cell.key}/{m}", "score"))
            for m in methods}


def scored_methods(ws: Workspace, cell: Cell) -> list[str]:
    return [m for m in METHODS if f"{cell.key}/{m}:score" in ws.data["stages"]]


# evaluate / combine / experiment ---------------------------------------------------------

def _write_distributions(ws: Workspace, cell: Cell, scores: dict, fm: np.ndarray) -> None:
    d = ws.cell_dir(cell) / "distributions"
    for m, sv in scores.items():
        ws.register(tables.sorted_scores(sv, fm, d / f"sorted_{m}.csv"), "evaluate")
        ws.register(tables.unsorted_scores(sv, fm, d / f"unsorted_{m}.csv"), "evaluate")
        ws.register(tables.score_histogram(sv, fm, d / f"hist_{m}.csv",
                                           ws.config.histogram_bins), "evaluate")


def evaluate(ws: Workspace, cell: Cell, ratios: Sequence[float] | None = None,
             method: str | None = None) -> Path:
    t0 = time.perf_counter()
    ds = _dataset(ws, cell)
    available = scored_methods(ws, cell)
    if method is not None:
        if method not in available:
            raise ArtifactError(f"no '{method}' scores for {cell.key}: run 'score --method {method}'")
        available = [method]
    if not available:
        raise ArtifactError(f"no scores for {cell.key}: run the 'score' stage first")
    specs = [s for s in ws.config.ranking_specs() if s.source in available]
    if not specs:
        specs = [parse_ranking(m if m in ("loss", "random") else f"{m}_high") for m in available]
    ratios = list(ratios) if ratios else list(ws.config.inspection_ratios)
    for r in ratios:
        if not 0 < r <= 1:
            raise ConfigError(f"inspection ratio must lie in (0, 1], got {r}")
    scores = _scores(ws, cell, available)
    fm = ds.train_flip_mask()
    detection, curves, orders = {}, {}, {}
    grid = default_ratios(ws.config.curve_step)
    for s in specs:
        orders[s.label] = rank(scores[s.source], s)
        detection[s.label] = inspection_curve(orders[s.label], fm, ratios)
        curves[s.label] = inspection_curve(orders[s.label], fm, grid)
    d = ws.cell_dir(cell)
    acc = _read_json(ws.require(d / "train.json", cell.key, "train"))["test_accuracy"]
    summary = summarize(cell, acc, ds.size("train"), int(fm.sum()), detection, curves, {},
                        fingerprint=ds.fingerprint())
    ws.register(_json(d / "evaluation.json", summary), "evaluate")
    rows = [[label, r.inspection_ratio, len(r.inspected), r.detected, r.total_flips,
             r.detection_rate] for label, res in detection.items() for r in res]
    ws.register(tables.write_rows(d / "detection.csv", ["ranking", "inspection_ratio", "inspected",
                                                        "detected", "total_flips",
                                                        "detection_rate"], rows), "evaluate")
    ws.register(tables.curve_table(summary, d / "curves.csv"), "evaluate")
    _write_distributions(ws, cell, scores, fm)
    spec = ws.config.detection_diff
    if spec is not None:
        labels = [r for r in spec.rankings if parse_ranking(r).source in available]
        if labels:
            diff_orders = {r: rank(scores[parse_ranking(r).source], parse_ranking(r)) for r in labels}
            diff = detection_diff(diff_orders, fm, spec.ratio, spec.window)
            ws.register(tables.diff_table(diff, d / "detection_diff.csv"), "evaluate")
    ws.stage_done(cell.key, "evaluate", time.perf_counter() - t0)
    return d / "evaluation.json"


def _combination_specs(ws: Workspace, method: str | None) -> list[CombinationSpec]:
    if method is None:
        return list(ws.config.combination_specs())
    try:
        return [preset(method)]
    except ConfigError:
        return [CombinationSpec.from_labels(method.split("+"))]


def combine_stage(ws: Workspace, cell: Cell, ratios: Sequence[float] | None = None,
                  method: str | None = None) -> Path:
    t0 = time.perf_counter()
    specs = _combination_specs(ws, method)
    if not specs:
        raise ConfigError("no combinations configured; pass --method with a preset or a+b label")
    ds = _dataset(ws, cell)
    fm = ds.train_flip_mask()
    needed = sorted({c.source for s in specs for c in s.constituents})
    scores = _scores(ws, cell, needed)
    ratios = list(ratios) if ratios else list(ws.config.inspection_ratios)
    d = ws.cell_dir(cell) / "combined"
    results = {}
    for spec in specs:
        sv = combine(scores, spec)
        path = d / f"{spec.label}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_scores(sv, path)
        ws.register(path, "combine")
        ws.register(path.with_name(path.name + ".meta.json"), "combine")
        results[spec.label] = inspection_curve(rank(sv, parse_ranking("combined")), fm, ratios)
    out = {label: [r.to_dict() for r in res] for label, res in results.items()}
    ws.register(_json(ws.cell_dir(cell) / "combined.json", out), "combine")
    ws.stage_done(cell.key, "combine", time.perf_counter() - t0)
    return ws.cell_dir(cell) / "combined.json"


def experiment(ws: Workspace, cell: Cell) -> Path:
    t0 = time.perf_counter()
    ex = ws.config.experiments
    if not (ex.correction or ex.deletion):
        raise ConfigError("the config enables neither correction nor deletion experiments")
    ds = _dataset(ws, cell)
    spec = parse_ranking(ex.ranking)
    order = rank(_scores(ws, cell, [spec.source])[spec.source], spec)
    cfg = ws.config.train_config().with_seed(cell.seed)
    arch = ws.config.architecture_for(ds)
    base = retrain_accuracy(ds, arch, cfg, ex.repeats) if ex.baseline else False
    results = []
    for r in ex.ratios:
        if ex.correction:
            results.append(correction_experiment(ds, order, r, arch, cfg, ex.repeats, base))
        if ex.deletion:
            results.append(deletion_experiment(ds, order, r, arch, cfg, ex.repeats, base))
    path = ws.register(_json(ws.cell_dir(cell) / "experiments.json",
                             [e.to_dict() for e in results]), "experiment")
    ws.stage_done(cell.key, "experiment", time.perf_counter() - t0)
    return path


# report -------------------------------------------------------------------------------

def _summaries(ws: Workspace) -> list[dict]:
    out = []
    for cell in ws.config.cells():
        d = ws.cell_dir(cell)
        if f"{cell.key}:evaluate" not in ws.data["stages"]:
            continue
        s = _read_json(ws.require(d / "evaluation.json", cell.key, "evaluate"))
        if f"{cell.key}:combine" in ws.data["stages"]:
            s["combined"] = _read_json(ws.require(d / "combined.json", cell.key, "combine"))
        if f"{cell.key}:experiment" in ws.data["stages"]:
            s["experiments"] = _read_json(ws.require(d / "experiments.json", cell.key, "experiment"))
        out.append(s)
    return out


def _plots(ws: Workspace, summary: dict) -> None:
    cell = Cell.from_dict(summary["cell"])
    d = ws.cell_dir(cell) / "plots"
    d.mkdir(parents=True, exist_ok=True)
    series = {label: ([r["inspection_ratio"] for r in res], [r["detection_rate"] for r in res])
              for label, res in summary["curves"].items()}
    chart = svg.line_chart(series, f"Detection vs inspection ({cell.key})", "inspection ratio",
                           "detected flips", ylim=(0.0, 1.0))
    (d / "curves.svg").write_text(chart, encoding="utf-8")
    ws.register(d / "curves.svg", "report")
    dist = ws.cell_dir(cell) / "distributions"
    for m in METHODS:
        hist = dist / f"hist_{m}.csv"
        if not hist.exists():
            continue
        rows = np.genfromtxt(ws.require(hist, cell.key, "evaluate"), delimiter=",", skip_header=1,
                             ndmin=2)
        edges = [*rows[:, 0], rows[-1, 1]]
        doc = svg.histogram(edges, {"clean": rows[:, 2].astype(int), "flipped": rows[:, 3].astype(int)},
                            f"{m} scores ({cell.key})", "score")
        (d / f"hist_{m}.svg").write_text(doc, encoding="utf-8")
        ws.register(d / f"hist_{m}.svg", "report")
        srt = np.genfromtxt(ws.require(dist / f"sorted_{m}.csv", cell.key, "evaluate"), delimiter=",",
                            skip_header=1, ndmin=2)
        pos, val, flipped = srt[:, 0], srt[:, 2], srt[:, 3].astype(bool)
        doc = svg.line_chart({"all": (pos, val), "flipped": (pos[flipped], val[flipped])},
                             f"sorted {m} scores ({cell.key})", "position", "score")
        (d / f"sorted_{m}.svg").write_text(doc, encoding="utf-8")
        ws.register(d / f"sorted_{m}.svg", "report")


def report(ws: Workspace) -> list[Path]:
    t0 = time.perf_counter()
    summaries = _summaries(ws)
    if not summaries:
        raise ArtifactError("nothing to report: run 'evaluate' for at least one cell")
    out = [tables.detection_table(summaries, ws.out / "table_detection.csv")]
    if any(s["combined"] for s in summaries):
        out.append(tables.combination_table(summaries, ws.out / "table_combination.csv"))
    if any(s["experiments"] for s in summaries):
        out.append(tables.experiment_table(summaries, ws.out / "experiments.csv"))
    for p in out:
        ws.register(p, "report")
    for s in summaries:
        _plots(ws, s)
    timing_rows = []
    for key, seconds in ws.timings().items():
        scope, stage = key.rsplit(":", 1)
        if stage != "score":
            continue
        cell_key, method = scope.rsplit("/", 1)
        dataset, seed, flip_ = cell_key.split("/")
        meta = _read_json(ws.out / cell_key / "scores" / f"{method}.csv.meta.json")["meta"]
        settings = {k: v for k, v in meta.items() if not isinstance(v, (list, dict))}
        timing_rows.append({"dataset": dataset, "mislabeled": float(flip_[4:]),
                            "seed": int(seed[4:]), "method": method, "seconds": seconds, **settings})
    if timing_rows:
        p = tables.timing_table(timing_rows, ws.out / "timing.csv")
        ws.register(p, "report", timing=True)
        out.append(p)
    ws.stage_done("run", "report", time.perf_counter() - t0)
    return out


# whole pipeline ---------------------------------------------------------------------------

def run_cell_stages(ws: Workspace, cell: Cell) -> None:
    flip(ws, cell)
    train_stage(ws, cell)
    score(ws, cell)
    evaluate(ws, cell)
    if ws.config.combinations:
        combine_stage(ws, cell)
    if ws.config.experiments.correction or ws.config.experiments.deletion:
        experiment(ws, cell)


def run_all(ws: Workspace, threads: int = 1) -> list[Path]:
    cells = ws.config.cells()
    for dataset, seed in sorted({(c.dataset, c.seed) for c in cells}):
        generate(ws, dataset, seed)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for f in [pool.submit(run_cell_stages, ws, c) for c in cells]:
                f.result()
    else:
        for c in cells:
            run_cell_stages(ws, c)
    return report(ws)
