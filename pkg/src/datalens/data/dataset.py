from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from datalens.errors import ArtifactError, DimensionError, StageVersionError

SPLITS = ("train", "validation", "test")
FORMAT = "datalens.dataset"
VERSION = 1

# rows of the published dataset table: train, validation, test, length, channels, classes
DATASET_PROPERTIES = {
    "anomaly": (45000, 5000, 10000, 50, 3, 2),
    "character_trajectories": (1383, 606, 869, 206, 3, 20),
    "fordb": (2520, 1091, 810, 500, 1, 2),
}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Samples of shape (n, channels, length) with true and observed labels.

    ``split`` tags each sample with one of :data:`SPLITS`. Label flips only
    ever touch the train split, and ``flip_mask`` is always identical to
    ``observed_labels != true_labels``.
    """

    samples: np.ndarray
    true_labels: np.ndarray
    observed_labels: np.ndarray
    flip_mask: np.ndarray
    split: np.ndarray
    num_classes: int
    class_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 3:
            raise DimensionError(f"samples must be (n, channels, length), got shape {s.shape}")
        n = s.shape[0]
        t = np.asarray(self.true_labels, dtype=np.int64)
        o = np.asarray(self.observed_labels, dtype=np.int64)
        m = np.asarray(self.flip_mask, dtype=bool)
        sp = np.asarray(self.split).astype("<U10")
        for name, arr in (("true_labels", t), ("observed_labels", o), ("flip_mask", m), ("split", sp)):
            if arr.shape != (n,):
                raise DimensionError(f"{name} must have shape ({n},), got {arr.shape}")
        if not set(np.unique(sp)) <= set(SPLITS):
            raise DimensionError(f"unknown split tags {sorted(set(np.unique(sp)) - set(SPLITS))}")
        k = int(self.num_classes)
        if k < 1:
            raise DimensionError("num_classes must be positive")
        for arr in (t, o):
            if n and (arr.min() < 0 or arr.max() >= k):
                raise DimensionError(f"labels must lie in [0, {k})")
        if not np.array_equal(m, o != t):
            raise DimensionError("flip_mask must equal (observed_labels != true_labels)")
        if np.any(m & (sp != "train")):
            raise DimensionError("label flips are only allowed in the train split")
        if not np.all(np.isfinite(s)):
            raise DimensionError("samples must be finite")
        names = tuple(str(c) for c in self.class_names) or tuple(str(i) for i in range(k))
        if len(names) != k:
            raise DimensionError("class_names must have num_classes entries")
        object.__setattr__(self, "samples", _frozen(s))
        object.__setattr__(self, "true_labels", _frozen(t))
        object.__setattr__(self, "observed_labels", _frozen(o))
        object.__setattr__(self, "flip_mask", _frozen(m))
        object.__setattr__(self, "split", _frozen(sp))
        object.__setattr__(self, "num_classes", k)
        object.__setattr__(self, "class_names", names)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def length(self) -> int:
        return self.samples.shape[2]

    def indices(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise KeyError(split)
        return np.flatnonzero(self.split == split)

    def size(self, split: str) -> int:
        return int(np.sum(self.split == split))

    def split_arrays(self, split: str, labels: str = "observed") -> tuple[np.ndarray, np.ndarray]:
        idx = self.indices(split)
        y = self.observed_labels if labels == "observed" else self.true_labels
        return self.samples[idx], y[idx]

    def train_flip_mask(self) -> np.ndarray:
        return self.flip_mask[self.indices("train")]

    def replace(self, **changes) -> "TimeSeriesDataset":
        fields = dict(samples=self.samples, true_labels=self.true_labels,
                      observed_labels=self.observed_labels, flip_mask=self.flip_mask,
                      split=self.split, num_classes=self.num_classes,
                      class_names=self.class_names, meta=dict(self.meta))
        fields.update(changes)
        if "observed_labels" in changes and "flip_mask" not in changes:
            fields["flip_mask"] = np.asarray(fields["observed_labels"]) != np.asarray(fields["true_labels"])
        return TimeSeriesDataset(**fields)

    def subset(self, keep: np.ndarray) -> "TimeSeriesDataset":
        keep = np.asarray(keep)
        return self.replace(samples=self.samples[keep], true_labels=self.true_labels[keep],
                            observed_labels=self.observed_labels[keep],
                            flip_mask=self.flip_mask[keep], split=self.split[keep])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.samples.astype("<f8"), self.true_labels.astype("<i8"),
                    self.observed_labels.astype("<i8"), self.flip_mask.astype("u1")):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update("|".join(self.split.tolist()).encode())
        h.update(json.dumps(list(self.class_names)).encode())
        return h.hexdigest()

    def manifest(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "shape": [int(x) for x in self.samples.shape],
            "splits": {s: self.size(s) for s in SPLITS},
            "num_classes": self.num_classes,
            "class_map": {name: i for i, name in enumerate(self.class_names)},
            "num_flipped": int(self.flip_mask.sum()),
            "fingerprint": self.fingerprint(),
            "meta": self.meta,
        }


def save_dataset(ds: TimeSeriesDataset, path) -> Path:
    """Write ``<path>`` (npz arrays) and ``<path>.json`` (manifest)."""
    path = Path(path)
    _write_npz(path, dict(samples=ds.samples, true_labels=ds.true_labels,
                          observed_labels=ds.observed_labels, flip_mask=ds.flip_mask,
                          split=ds.split))
    manifest_path(path).write_text(json.dumps(ds.manifest(), indent=1, sort_keys=True) + "\n",
                                   encoding="utf-8")
    return path


def _write_npz(path: Path, arrays: dict) -> None:
    # np.savez stamps members with the wall clock; fixed timestamps keep files byte-stable
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(info, buf.getvalue())


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_dataset(path) -> TimeSeriesDataset:
    path = Path(path)
    mpath = manifest_path(path)
    if not path.exists() or not mpath.exists():
        raise ArtifactError(f"missing dataset artifact {path}")
    man = json.loads(mpath.read_text(encoding="utf-8"))
    if man.get("format") != FORMAT:
        raise ArtifactError(f"{mpath} is not a dataset manifest")
    if man.get("version") != VERSION:
        raise StageVersionError(f"dataset version {man.get('version')} != {VERSION}")
    with np.load(path, allow_pickle=False) as z:
        ds = TimeSeriesDataset(z["samples"], z["true_labels"], z["observed_labels"],
                               z["flip_mask"], z["split"], man["num_classes"],
                               tuple(sorted(man["class_map"], key=man["class_map"].get)),
                               man.get("meta", {}))
    if ds.fingerprint() != man["fingerprint"]:
        raise ArtifactError(f"dataset {path} does not match its manifest fingerprint")
    return ds


def concat_splits(parts: Sequence[tuple[str, np.ndarray, np.ndarray]], num_classes: int,
                  class_names: Sequence[str] = (), meta: dict | None = None) -> TimeSeriesDataset:
    """Assemble a clean dataset from ``(split, samples, labels)`` parts."""
    X = np.concatenate([p[1] for p in parts])
    y = np.concatenate([np.asarray(p[2], dtype=np.int64) for p in parts])
    split = np.concatenate([np.full(len(p[2]), p[0], dtype="<U10") for p in parts])
    return TimeSeriesDataset(X, y, y.copy(), np.zeros(len(y), bool), split, num_classes,
                             tuple(class_names), meta or {})


def check_properties(ds: TimeSeriesDataset, name: str) -> None:
    """Raise DimensionError unless ``ds`` has the published shape for ``name``."""
    n_tr, n_va, n_te, length, channels, classes = DATASET_PROPERTIES[name]
    got = (ds.size("train"), ds.size("validation"), ds.size("test"), ds.length, ds.channels,
           ds.num_classes)
    if got != (n_tr, n_va, n_te, length, channels, classes):
        raise DimensionError(f"{name}: expected {DATASET_PROPERTIES[name]}, got {got}")
