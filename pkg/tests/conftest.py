from __future__ import annotations

import numpy as np
import pytest

from datalens.data import FlipSpec, flip_labels, generate_anomaly_dataset
from datalens.model import ArchitectureSpec, TrainConfig, train


@pytest.fixture(scope="session")
def small_run():
    """A quickly trained anomaly model (10% flips) shared by scoring and harness tests."""
    clean = generate_anomaly_dataset(400, 100, 100, seed=0)
    ds = flip_labels(clean, FlipSpec(0.1, seed=0))
    spec = ArchitectureSpec.default(3, 50, 2)
    model, history = train(ds, spec, TrainConfig(epochs=15, seed=0))
    return ds, model, history


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


DESK = dict(n_train=4500, n_val=500, n_test=1000)
DESK_SEEDS = (0, 1, 2)
_desk_cache: dict = {}


def desk_run(seed: int, flip_rate: float = 0.1):
    """Desk-scale anomaly cell (4500/500/1000), trained with the default model and config."""
    key = (seed, flip_rate)
    if key not in _desk_cache:
        clean = generate_anomaly_dataset(**DESK, seed=seed)
        ds = flip_labels(clean, FlipSpec(flip_rate, seed=seed))
        model, history = train(ds, ArchitectureSpec.default(3, 50, 2), TrainConfig(seed=seed))
        _desk_cache[key] = (ds, model, history)
    return _desk_cache[key]


@pytest.fixture(scope="session")
def desk0():
    return desk_run(0)


# acceptance bookkeeping: one line per criterion in the terminal summary
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture()
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE.setdefault(number, []).append((bool(passed), detail))
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        status = "PASS" if all(p for p, _ in parts) else "FAIL"
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number:2d}: {status} | {detail}")
