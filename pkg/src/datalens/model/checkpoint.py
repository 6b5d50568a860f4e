"""Model checkpoints: JSON container, parameters as base64 little-endian float64."""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path

import numpy as np

from datalens.errors import ArtifactError, StageVersionError
from datalens.model.architecture import ArchitectureSpec, ModelState
from datalens.numerics.params import ParamVector

FORMAT = "datalens.model"
VERSION = 1


def to_dict(model: ModelState) -> dict:
    raw = model.params.values.astype("<f8").tobytes()
    return {
        "format": FORMAT,
        "version": VERSION,
        "spec": model.spec.to_dict(),
        "segments": [list(s) for s in model.params.segments],
        "params_b64": base64.b64encode(raw).decode("ascii"),
        "params_sha256": hashlib.sha256(raw).hexdigest(),
        "meta": model.meta,
    }


def from_dict(d: dict) -> ModelState:
    if d.get("format") != FORMAT:
        raise ArtifactError(f"not a model checkpoint (format={d.get('format')!r})")
    if d.get("version") != VERSION:
        raise StageVersionError(f"checkpoint version {d.get('version')} != {VERSION}")
    raw = base64.b64decode(d["params_b64"])
    if hashlib.sha256(raw).hexdigest() != d["params_sha256"]:
        raise ArtifactError("checkpoint parameter checksum mismatch")
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    params = ParamVector(values, tuple(tuple(s) for s in d["segments"]))
    return ModelState(ArchitectureSpec.from_dict(d["spec"]), params, d.get("meta", {}))


def save_model(model: ModelState, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_dict(model), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_model(path) -> ModelState:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing model checkpoint {path}")
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"corrupt checkpoint {path}: {exc}") from exc
    return from_dict(d)
