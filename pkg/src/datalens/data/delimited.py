"""Comma-delimited time-series files.

One sample per line: an integer label, then ``channels * length`` floats in
channel-major order. An optional first line ``label,c0_t0,c0_t1,...`` is a
header.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from datalens.data.dataset import SPLITS, TimeSeriesDataset, concat_splits
from datalens.errors import ArtifactError, ParseError


@dataclass(frozen=True)
class DelimitedSchema:
    channels: int
    length: int
    header: Optional[bool] = None  # None: detect a leading "label," line
    labels: Optional[Sequence[int]] = None  # closed label set; None accepts any

    @property
    def width(self) -> int:
        return 1 + self.channels * self.length


def header_line(channels: int, length: int) -> str:
    cols = [f"c{c}_t{t}" for c in range(channels) for t in range(length)]
    return ",".join(["label", *cols])


def _parse_label(field: str, lineno: int) -> int:
    try:
        return int(field)
    except ValueError:
        pass
    try:
        f = float(field)
    except ValueError:
        raise ParseError(f"label {field!r} is not an integer", line=lineno) from None
    if not f.is_integer():
        raise ParseError(f"label {field!r} is not an integer", line=lineno)
    return int(f)


def _read_rows(path: Path, schema: DelimitedSchema):
    if not path.exists():
        raise ArtifactError(f"missing delimited file {path}")
    labels, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if lineno == 1 and schema.header is not False and fields[0].strip().lower() == "label":
                continue
            if lineno == 1 and schema.header is True:
                raise ParseError("expected a header line", line=lineno)
            if len(fields) != schema.width:
                raise ParseError(f"expected {schema.width} fields, found {len(fields)}", line=lineno)
            label = _parse_label(fields[0].strip(), lineno)
            if schema.labels is not None and label not in set(schema.labels):
                raise ParseError(f"label {label} is not in the declared label set", line=lineno)
            try:
                values = [float(v) for v in fields[1:]]
            except ValueError as exc:
                raise ParseError(f"non-numeric value ({exc})", line=lineno) from None
            if not np.all(np.isfinite(values)):
                raise ParseError("non-finite value", line=lineno)
            labels.append(label)
            rows.append(values)
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), schema.channels, schema.length)
    return X, np.asarray(labels, dtype=np.int64)


def _label_map(raw: Sequence[np.ndarray], schema: DelimitedSchema) -> dict[int, int]:
    if schema.labels is not None:
        values = sorted(set(int(v) for v in schema.labels))
    else:
        values = sorted(set(int(v) for arr in raw for v in arr))
    return {v: i for i, v in enumerate(values)}


def load_delimited(path, schema: DelimitedSchema, split: str = "train") -> TimeSeriesDataset:
    """Read one file as a single-split, clean dataset with labels re-indexed to [0, k)."""
    return load_splits({split: path}, schema)


def load_splits(paths: Mapping[str, str | Path], schema: DelimitedSchema) -> TimeSeriesDataset:
    """Read one file per split; the label map is shared across files."""
    unknown = set(paths) - set(SPLITS)
    if unknown:
        raise ArtifactError(f"unknown split names {sorted(unknown)}")
    raw = {s: _read_rows(Path(p), schema) for s, p in paths.items()}
    mapping = _label_map([y for _, y in raw.values()], schema)
    parts = [(s, X, np.array([mapping[int(v)] for v in y], dtype=np.int64))
             for s, (X, y) in ((s, raw[s]) for s in SPLITS if s in raw)]
    names = [str(v) for v in mapping]
    meta = {"source": {s: str(p) for s, p in paths.items()}}
    return concat_splits(parts, max(len(mapping), 1), names, meta)


def write_delimited(path, dataset: TimeSeriesDataset, split: str | None = None,
                    header: bool = False, labels: str = "observed") -> Path:
    """Write samples (optionally one split) using the original label values."""
    path = Path(path)
    idx = np.arange(len(dataset)) if split is None else dataset.indices(split)
    y = dataset.observed_labels if labels == "observed" else dataset.true_labels
    names = dataset.class_names
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(header_line(dataset.channels, dataset.length) + "\n")
        for i in idx:
            name = names[y[i]]
            label = name if name.lstrip("-").isdigit() else str(int(y[i]))
            vals = ",".join(repr(float(v)) for v in dataset.samples[i].ravel())
            fh.write(f"{label},{vals}\n")
    return path
