"""Output directory layout and the run manifest.

The manifest records the tool version, the canonical config and its hash,
dataset fingerprints, the version of every stage that ran, wall times, and
every file written together with its sha256. Wall times go to a separate
``timings.json`` (and files derived from them are registered without a
hash), so the manifest itself, like every non-timing output, is byte-stable
across reruns.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path

from datalens import __version__
from datalens.errors import ArtifactError, ConfigError, StageVersionError
from datalens.harness.grid import Cell, GridConfig, parse_config

FORMAT = "datalens.run"
VERSION = 1
MANIFEST = "manifest.json"
TIMINGS = "timings.json"

# bump a stage's number when its on-disk outputs change incompatibly
STAGE_VERSIONS = {"generate": 1, "flip": 1, "train": 1, "score": 1, "evaluate": 1,
                  "combine": 1, "experiment": 1, "report": 1}


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Workspace:
    def __init__(self, out: Path, config: GridConfig, data: dict):
        self.out = Path(out)
        self.config = config
        self.data = data
        self._lock = threading.Lock()
        self._timings: dict[str, float] = {}

    # construction -----------------------------------------------------------------

    @classmethod
    def open(cls, out, config: GridConfig | None) -> "Workspace":
        out = Path(out)
        path = out / MANIFEST
        data = None
        if path.exists():
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as e:
                raise ArtifactError(f"corrupt manifest {path}: {e}") from None
            if data.get("format") != FORMAT:
                raise ArtifactError(f"{path} is not a datalens run manifest")
            if data.get("version") != VERSION:
                raise StageVersionError(f"manifest version {data.get('version')} != {VERSION}")
        if config is None:
            if data is None:
                raise ConfigError("no --config given and no manifest in the output directory")
            config = parse_config(data["config"])
        if data is None:
            data = {"format": FORMAT, "version": VERSION, "tool_version": __version__,
                    "config_sha256": config.digest(), "config": json.loads(config.canonical()),
                    "seeds": list(config.seeds), "datasets": {}, "stages": {},
                    "outputs": {TIMINGS: {"stage": "manifest", "timing": True}},
                    "timings_file": TIMINGS}
        elif data["config_sha256"] != config.digest():
            raise ConfigError(f"{out} holds outputs of a different config "
                              f"({data['config_sha256'][:12]}); use a fresh --out directory")
        out.mkdir(parents=True, exist_ok=True)
        ws = cls(out, config, data)
        tpath = out / TIMINGS
        if tpath.exists():
            ws._timings = json.loads(tpath.read_text(encoding="utf-8"))
        return ws

    def save(self) -> Path:
        with self._lock:
            text = json.dumps(self.data, indent=1, sort_keys=True) + "\n"
            timings = json.dumps(self._timings, indent=1, sort_keys=True) + "\n"
        for name, body in ((TIMINGS, timings), (MANIFEST, text)):
            path = self.out / name
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_text(body, encoding="utf-8")
            tmp.replace(path)
        return self.out / MANIFEST

    # layout -------------------------------------------------------------------------

    def data_dir(self, dataset: str, seed: int) -> Path:
        return self.out / dataset / f"seed{seed}"

    def clean_path(self, dataset: str, seed: int) -> Path:
        return self.data_dir(dataset, seed) / "clean.npz"

    def cell_dir(self, cell: Cell) -> Path:
        return self.out / cell.key

    def rel(self, path: Path) -> str:
        return Path(path).relative_to(self.out).as_posix()

    # bookkeeping --------------------------------------------------------------------

    def register(self, path: Path, stage: str, timing: bool = False) -> Path:
        path = Path(path)
        # timing files change on every run, so they are listed without a hash
        entry = {"stage": stage, "timing": True} if timing else {"sha256": sha256_file(path),
                                                                 "stage": stage}
        with self._lock:
            self.data["outputs"][self.rel(path)] = entry
        return path

    def stage_done(self, key: str, stage: str, seconds: float, **info) -> None:
        with self._lock:
            self.data["stages"][f"{key}:{stage}"] = {"version": STAGE_VERSIONS[stage], **info}
            self._timings[f"{key}:{stage}"] = seconds

    def add_fingerprint(self, key: str, fingerprint: str) -> None:
        with self._lock:
            self.data["datasets"][key] = fingerprint

    def timings(self) -> dict:
        return dict(self._timings)

    def require(self, path: Path, key: str, stage: str) -> Path:
        """Check that ``stage`` produced ``path`` at the current version and left it unchanged."""
        path = Path(path)
        rec = self.data["stages"].get(f"{key}:{stage}")
        if not path.exists() or rec is None:
            raise ArtifactError(f"missing artifact {self.rel(path)}: run the '{stage}' stage first")
        if rec["version"] != STAGE_VERSIONS[stage]:
            raise StageVersionError(
                f"{self.rel(path)} was written by '{stage}' v{rec['version']}, "
                f"this tool expects v{STAGE_VERSIONS[stage]}; rerun that stage")
        reg = self.data["outputs"].get(self.rel(path))
        if reg is None or reg["sha256"] != sha256_file(path):
            raise ArtifactError(f"{self.rel(path)} changed since '{stage}' wrote it; rerun that stage")
        return path
