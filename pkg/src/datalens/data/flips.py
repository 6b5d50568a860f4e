from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from datalens.data.dataset import TimeSeriesDataset
from datalens.errors import ConfigError

MODES = ("binary_complement", "uniform_other_class")


@dataclass(frozen=True)
class FlipSpec:
    rate: float
    seed: int = 0
    mode: str | None = None  # None picks by class count

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError(f"flip rate must lie in [0, 1], got {self.rate}")
        if self.mode is not None and self.mode not in MODES:
            raise ConfigError(f"unknown flip mode {self.mode!r}")

    def count(self, n_train: int) -> int:
        """Number of flips: ``rate * n_train`` rounded half up."""
        return int(math.floor(self.rate * n_train + 0.5))

    def resolved_mode(self, num_classes: int) -> str:
        if self.mode is not None:
            return self.mode
        return "binary_complement" if num_classes == 2 else "uniform_other_class"

    def to_dict(self) -> dict:
        return asdict(self)


def flip_labels(dataset: TimeSeriesDataset, spec: FlipSpec) -> TimeSeriesDataset:
    """Corrupt exactly ``spec.count(n_train)`` train labels chosen uniformly by seed."""
    if dataset.flip_mask.any():
        raise ConfigError("dataset already carries label flips")
    mode = spec.resolved_mode(dataset.num_classes)
    k = dataset.num_classes
    if mode == "binary_complement" and k != 2:
        raise ConfigError("binary_complement flips need exactly 2 classes")
    if k < 2 and spec.rate > 0:
        raise ConfigError("cannot flip labels of a single-class dataset")
    train_idx = dataset.indices("train")
    count = spec.count(train_idx.size)
    rng = np.random.default_rng(spec.seed)
    chosen = np.sort(rng.choice(train_idx, size=count, replace=False))
    observed = dataset.true_labels.copy()
    if mode == "binary_complement":
        observed[chosen] = 1 - observed[chosen]
    else:
        offset = rng.integers(1, k, size=count)
        observed[chosen] = (observed[chosen] + offset) % k
    meta = dict(dataset.meta)
    meta["flip"] = {**spec.to_dict(), "mode": mode, "count": count}
    return dataset.replace(observed_labels=observed, meta=meta)
