"""CSV exports of cell reports.

Every writer is deterministic: fixed column order, ``repr`` floats and ``\\n``
line endings. Wall-clock values only ever go to the timing table, and
the other tables read from cell summaries that carry none.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from datalens.harness.diff import DetectionDiff
from datalens.harness.ranking import TABLE_COLUMNS, order_by_key
from datalens.scoring.scores import ScoreVector

TABLE_LABELS = tuple(s.label for s in TABLE_COLUMNS)
COMBINATION_LABELS = tuple(s.label for s in TABLE_COLUMNS if s.source != "random")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _ratios(summary: dict) -> list[float]:
    first = next(iter(summary["detection"].values()))
    return [res["inspection_ratio"] for res in first]


def detection_table(summaries: list[dict], path) -> Path:
    """One row per (dataset, seed, flip rate, inspection ratio); one column per ranking."""
    labels = [l for l in TABLE_LABELS if any(l in s["detection"] for s in summaries)]
    header = ["dataset", "seed", "model_accuracy", "mislabeled", "inspected", *labels]
    rows = []
    for s in summaries:
        c = s["cell"]
        for j, ratio in enumerate(_ratios(s)):
            rows.append([c["dataset"], c["seed"], s["model_accuracy"], c["flip_rate"], ratio,
                         *[s["detection"][l][j]["detection_rate"] if l in s["detection"] else ""
                           for l in labels]])
    return write_rows(path, header, rows)


def combination_table(summaries: list[dict], path) -> Path:
    """Best single ranking, then each combination, with X/- membership columns."""
    header = ["dataset", "seed", "mislabeled", "inspected", "detected", "combination",
              *COMBINATION_LABELS]
    rows = []
    for s in summaries:
        c = s["cell"]
        for j, ratio in enumerate(_ratios(s)):
            singles = {l: v[j]["detection_rate"] for l, v in s["detection"].items() if l != "random"}
            if singles:
                best = max(singles, key=lambda l: (singles[l], -TABLE_LABELS.index(l)))
                rows.append([c["dataset"], c["seed"], c["flip_rate"], ratio, singles[best],
                             best, *["X" if l == best else "-" for l in COMBINATION_LABELS]])
            for label, res in s["combined"].items():
                parts = set(label.split("+"))
                rows.append([c["dataset"], c["seed"], c["flip_rate"], ratio,
                             res[j]["detection_rate"], label,
                             *["X" if l in parts else "-" for l in COMBINATION_LABELS]])
    return write_rows(path, header, rows)


def curve_table(summary: dict, path) -> Path:
    curves = summary["curves"]
    labels = list(curves)
    ratios = [res["inspection_ratio"] for res in curves[labels[0]]]
    rows = [[ratio, *[curves[l][i]["detection_rate"] for l in labels]]
            for i, ratio in enumerate(ratios)]
    return write_rows(path, ["inspection_ratio", *labels], rows)


def timing_table(rows: list[dict], path) -> Path:
    """``rows``: dicts with dataset, mislabeled, seed, method, seconds plus solver settings."""
    fixed = ["dataset", "mislabeled", "seed", "method", "seconds"]
    keys = sorted({k for r in rows for k in r} - set(fixed))
    return write_rows(path, fixed + keys, [[r.get(k, "") for k in fixed + keys] for r in rows])


def diff_table(diff: DetectionDiff, path) -> Path:
    rows = [[int(s), *[int(x) for x in row], int(row.any())]
            for s, row in zip(diff.samples, diff.detected)]
    return write_rows(path, ["sample_index", *diff.methods, "any"], rows)


EXPERIMENT_COLUMNS = ("kind", "ratio", "inspected", "changed", "flips_remaining",
                      "accuracy_mean", "accuracy_std", "baseline_mean", "baseline_std")


def experiment_table(summaries: list[dict], path) -> Path:
    header = ["dataset", "mislabeled", "seed", *EXPERIMENT_COLUMNS]
    rows = []
    for s in summaries:
        c = s["cell"]
        for e in s["experiments"]:
            rows.append([c["dataset"], c["flip_rate"], c["seed"],
                         *[e.get(k, "") for k in EXPERIMENT_COLUMNS]])
    return write_rows(path, header, rows)


def sorted_scores(sv: ScoreVector, flip_mask: np.ndarray, path) -> Path:
    """Scores in ascending order with their flip status."""
    order = order_by_key(-sv.values)
    rows = [[pos, int(i), sv.values[i], int(flip_mask[i])] for pos, i in enumerate(order)]
    return write_rows(path, ["position", "sample_index", "score", "flipped"], rows)


def score_histogram(sv: ScoreVector, flip_mask: np.ndarray, path, bins: int = 40) -> Path:
    v = sv.values
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    clean, _ = np.histogram(v[~flip_mask], edges)
    flipped, _ = np.histogram(v[flip_mask], edges)
    rows = [[edges[i], edges[i + 1], int(clean[i]), int(flipped[i])] for i in range(bins)]
    return write_rows(path, ["bin_left", "bin_right", "clean", "flipped"], rows)


def unsorted_scores(sv: ScoreVector, flip_mask: np.ndarray, path) -> Path:
    rows = [[i, s, int(f)] for i, (s, f) in enumerate(zip(sv.values, flip_mask))]
    return write_rows(path, ["sample_index", "score", "flipped"], rows)
