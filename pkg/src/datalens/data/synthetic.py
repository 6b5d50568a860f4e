"""Synthetic time-series classification datasets."""

from __future__ import annotations

import numpy as np

from datalens.data.dataset import TimeSeriesDataset, concat_splits
from datalens.errors import DimensionError

MIN_LENGTH = 8
SPIKE_MARGIN = 2
SPIKE_Z = 3.0


def _max_abs_z(X: np.ndarray) -> np.ndarray:
    sd = X.std(axis=2, keepdims=True)
    return (np.abs(X - X.mean(axis=2, keepdims=True)) / np.where(sd > 0, sd, 1.0)).max(axis=(1, 2))


def _balanced_labels(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    # class counts differ by at most one
    return rng.permutation(np.arange(n) % k)


def _sinusoid_mixture(rng: np.random.Generator, n: int, channels: int, length: int,
                      noise: float, components: int = 2) -> np.ndarray:
    t = np.arange(length) / length
    amp = rng.uniform(0.5, 1.0, size=(n, channels, components, 1))
    freq = rng.uniform(1.0, 5.0, size=(n, channels, components, 1))
    phase = rng.uniform(0.0, 2 * np.pi, size=(n, channels, components, 1))
    base = (amp * np.sin(2 * np.pi * freq * t + phase)).sum(axis=2)
    return base + noise * rng.standard_normal((n, channels, length))


def _anomaly_split(rng: np.random.Generator, n: int, channels: int, length: int,
                   noise: float, spike_range: tuple[float, float]):
    y = _balanced_labels(n, 2, rng)
    X = _sinusoid_mixture(rng, n, channels, length, noise)
    # redraw negatives whose plain signal already has a point at >= 3 sigma, so
    # the label is exactly "contains a 3 sigma point"
    for _ in range(100):
        bad = np.flatnonzero((y == 0) & (_max_abs_z(X) >= SPIKE_Z))
        if bad.size == 0:
            break
        X[bad] = _sinusoid_mixture(rng, bad.size, channels, length, noise)
    pos = np.flatnonzero(y == 1)
    ch = rng.integers(0, channels, size=pos.size)
    at = rng.integers(SPIKE_MARGIN, length - SPIKE_MARGIN, size=pos.size)
    sign = rng.choice([-1.0, 1.0], size=pos.size)
    height = rng.uniform(spike_range[0], spike_range[1], size=pos.size)
    rows = X[pos, ch]  # (m, length)
    mu, sd = rows.mean(axis=1), rows.std(axis=1)
    X[pos, ch, at] = mu + sign * height * sd
    return X, y


def generate_anomaly_dataset(n_train: int = 45000, n_val: int = 5000, n_test: int = 10000,
                             length: int = 50, channels: int = 3, seed: int = 0, *,
                             spike_range: tuple[float, float] = (4.0, 6.0),
                             noise: float = 0.1) -> TimeSeriesDataset:
    """Point-anomaly detection task on noisy sinusoid mixtures.

    Every channel is a sum of two random sinusoids (1-5 cycles per window)
    plus Gaussian noise. Positive samples get one point in one random channel
    replaced by ``mean +/- h * std`` of that channel's base signal, with ``h``
    drawn from ``spike_range``; negatives are left untouched.
    """
    for name, v in (("n_train", n_train), ("n_val", n_val), ("n_test", n_test),
                    ("channels", channels)):
        if v < 1:
            raise DimensionError(f"{name} must be >= 1")
    if length < MIN_LENGTH:
        raise DimensionError(f"length must be >= {MIN_LENGTH} to place a spike")
    if not 0 < spike_range[0] <= spike_range[1]:
        raise DimensionError("spike_range must be positive and ordered")
    seqs = np.random.SeedSequence(seed).spawn(3)
    parts = []
    for split, n, ss in zip(("train", "validation", "test"), (n_train, n_val, n_test), seqs):
        X, y = _anomaly_split(np.random.default_rng(ss), n, channels, length, noise, spike_range)
        parts.append((split, X, y))
    meta = {"generator": "anomaly", "seed": int(seed), "length": length, "channels": channels,
            "spike_range": list(spike_range), "noise": noise}
    return concat_splits(parts, 2, ("normal", "anomaly"), meta)


def generate_multiclass_dataset(n_train: int = 1383, n_val: int = 606, n_test: int = 869,
                                length: int = 206, channels: int = 3, num_classes: int = 20,
                                seed: int = 0, *, noise: float = 0.3) -> TimeSeriesDataset:
    """Class-prototype trajectories: each class owns a random sinusoid mixture
    per channel, samples add phase jitter, amplitude scaling and noise.

    Defaults give the shape of the character-trajectory task.
    """
    if min(n_train, n_val, n_test, channels) < 1 or num_classes < 2:
        raise DimensionError("counts must be >= 1 and num_classes >= 2")
    if length < MIN_LENGTH:
        raise DimensionError(f"length must be >= {MIN_LENGTH}")
    proto_seq, *seqs = np.random.SeedSequence(seed).spawn(4)
    prng = np.random.default_rng(proto_seq)
    freq = prng.uniform(0.5, 3.0, size=(num_classes, channels, 2, 1))
    phase = prng.uniform(0, 2 * np.pi, size=(num_classes, channels, 2, 1))
    amp = prng.uniform(0.5, 1.0, size=(num_classes, channels, 2, 1))
    t = np.arange(length) / length
    parts = []
    for split, n, ss in zip(("train", "validation", "test"), (n_train, n_val, n_test), seqs):
        rng = np.random.default_rng(ss)
        y = _balanced_labels(n, num_classes, rng)
        jitter = rng.normal(0, 0.2, size=(n, channels, 2, 1))
        scale = rng.uniform(0.8, 1.2, size=(n, 1, 1, 1))
        X = (scale * amp[y] * np.sin(2 * np.pi * freq[y] * t + phase[y] + jitter)).sum(axis=2)
        X += noise * rng.standard_normal(X.shape)
        parts.append((split, X, y))
    meta = {"generator": "multiclass", "seed": int(seed), "length": length,
            "channels": channels, "noise": noise}
    return concat_splits(parts, num_classes, (), meta)
