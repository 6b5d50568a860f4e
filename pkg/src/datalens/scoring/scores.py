from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from datalens.errors import ArtifactError, DimensionError, StageVersionError

FORMAT = "datalens.scores"
VERSION = 1
COLUMNS = ("sample_index", "score", "method", "classwise", "direction_semantics")


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """One real score per training sample.

    ``direction_semantics`` says what low and high values mean for the method
    (for example ``"high = suspicious"``); rankings pick a direction on top.
    """

    method: str
    values: np.ndarray
    direction_semantics: str
    classwise: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise DimensionError(f"{self.method}: non-finite score at sample {bad}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_scores(sv: ScoreVector, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for i, s in enumerate(sv.values):
            w.writerow([i, repr(float(s)), sv.method, int(sv.classwise), sv.direction_semantics])
    meta = {"format": FORMAT, "version": VERSION, "method": sv.method, "n": len(sv),
            "classwise": sv.classwise, "direction_semantics": sv.direction_semantics,
            "meta": sv.meta}
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n",
                                  encoding="utf-8")
    return path


def read_scores(path) -> ScoreVector:
    path = Path(path)
    side = sidecar_path(path)
    if not path.exists() or not side.exists():
        raise ArtifactError(f"missing score file {path}")
    meta = json.loads(side.read_text(encoding="utf-8"))
    if meta.get("format") != FORMAT:
        raise ArtifactError(f"{side} is not a score sidecar")
    if meta.get("version") != VERSION:
        raise StageVersionError(f"score file version {meta.get('version')} != {VERSION}")
    values = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != COLUMNS:
            raise ArtifactError(f"{path}: unexpected header {header}")
        for i, row in enumerate(reader):
            if int(row[0]) != i:
                raise ArtifactError(f"{path}: sample_index out of order at row {i}")
            values.append(float(row[1]))
    if len(values) != meta["n"]:
        raise ArtifactError(f"{path}: {len(values)} rows, sidecar says {meta['n']}")
    return ScoreVector(meta["method"], np.array(values), meta["direction_semantics"],
                       bool(meta["classwise"]), meta.get("meta", {}))
