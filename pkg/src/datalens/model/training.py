from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from datalens.errors import ConfigError, DimensionError, NonFiniteLossError
from datalens.model import network
from datalens.model.architecture import ArchitectureSpec, ModelState
from datalens.numerics import dual as D

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def with_seed(self, seed: int) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), "seed": int(seed)})


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: Optional[float] = None
    val_accuracy: Optional[float] = None


class _Adam:
    def __init__(self, cfg: TrainConfig, size: int):
        self.cfg = cfg
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, g: np.ndarray) -> None:
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * g
        self.v = c.beta2 * self.v + (1 - c.beta2) * g * g
        mhat = self.m / (1 - c.beta1 ** self.t)
        vhat = self.v / (1 - c.beta2 ** self.t)
        theta -= c.learning_rate * mhat / (np.sqrt(vhat) + c.eps)


class _SGD:
    def __init__(self, cfg: TrainConfig, size: int):
        self.cfg = cfg
        self.buf = np.zeros(size)

    def step(self, theta: np.ndarray, g: np.ndarray) -> None:
        self.buf = self.cfg.momentum * self.buf + g
        theta -= self.cfg.learning_rate * self.buf


def _views(spec: ArchitectureSpec, theta: np.ndarray) -> dict:
    out, pos = {}, 0
    for name, shape in spec.param_shapes():
        size = int(np.prod(shape))
        out[name] = theta[pos:pos + size].reshape(shape)
        pos += size
    return out


def _batch_step(spec: ArchitectureSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray):
    P = _views(spec, theta)
    logits, _, cache = network.forward(spec, P, X)
    per = network._per_sample_ce(logits, y)
    network._raise_non_finite(per)
    g_logits = (D.softmax(logits) - np.eye(spec.num_classes)[y]) / len(y)
    grads = network.backward(spec, P, cache, g_logits)
    return float(per.mean()), network._flatten(spec, grads)


def _evaluate(spec: ArchitectureSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray,
              batch_size: int) -> tuple[float, float]:
    P = _views(spec, theta)
    losses, hits = [], 0
    for a in range(0, len(X), batch_size):
        logits = network.forward(spec, P, X[a:a + batch_size])[0]
        losses.append(network._per_sample_ce(logits, y[a:a + batch_size]))
        hits += int((np.argmax(logits, axis=1) == y[a:a + batch_size]).sum())
    per = np.concatenate(losses)
    return float(per.mean()), hits / len(X)


def train_arrays(X: np.ndarray, y: np.ndarray, spec: ArchitectureSpec, cfg: TrainConfig,
                 X_val: np.ndarray | None = None, y_val: np.ndarray | None = None,
                 init: np.ndarray | None = None) -> tuple[ModelState, list[EpochMetrics]]:
    """Minibatch training on arrays; the building block behind :func:`train`."""
    X = network._check_input(spec, X)
    y = network._check_labels(y, spec.num_classes)
    if len(X) == 0:
        raise DimensionError("training split is empty")
    if len(X) != len(y):
        raise DimensionError("samples and labels differ in length")
    has_val = X_val is not None and len(X_val) > 0
    if has_val:
        X_val = network._check_input(spec, X_val)
        y_val = network._check_labels(y_val, spec.num_classes)

    init_seq, shuffle_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    params0 = spec.init_params(np.random.default_rng(init_seq))
    theta = params0.values.copy() if init is None else np.array(init, dtype=np.float64)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    opt = _Adam(cfg, theta.size) if cfg.optimizer == "adam" else _SGD(cfg, theta.size)

    history = []
    n = len(X)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for bi, a in enumerate(range(0, n, cfg.batch_size)):
            idx = order[a:a + cfg.batch_size]
            try:
                _, g = _batch_step(spec, theta, X[idx], y[idx])
            except NonFiniteLossError as exc:
                raise NonFiniteLossError(
                    f"non-finite loss in epoch {epoch}, batch {bi} "
                    f"(training sample {int(idx[exc.sample_index])})",
                    sample_index=int(idx[exc.sample_index]), epoch=epoch, batch=bi) from exc
            opt.step(theta, g)
        tr_loss, tr_acc = _evaluate(spec, theta, X, y, cfg.batch_size)
        if not np.isfinite(tr_loss):
            raise NonFiniteLossError(f"non-finite training loss after epoch {epoch}", epoch=epoch)
        val_loss = val_acc = None
        if has_val:
            val_loss, val_acc = _evaluate(spec, theta, X_val, y_val, cfg.batch_size)
        history.append(EpochMetrics(epoch, tr_loss, tr_acc, val_loss, val_acc))
        log.debug("epoch %d: loss %.4f acc %.4f val_acc %s", epoch, tr_loss, tr_acc, val_acc)

    model = ModelState(spec, params0.with_values(theta),
                       {"train_config": cfg.to_dict(), "init": "uniform_fan_in"})
    return model, history


def train(dataset, spec: ArchitectureSpec, cfg: TrainConfig) -> tuple[ModelState, list[EpochMetrics]]:
    """Train on the dataset's train split with its observed labels."""
    X, y = dataset.split_arrays("train")
    Xv, yv = dataset.split_arrays("validation")
    if len(X) == 0:
        raise DimensionError("dataset has no train split")
    return train_arrays(X, y, spec, cfg, Xv, yv)


def accuracy(model: ModelState, X: np.ndarray, y: np.ndarray) -> float:
    """Standalone evaluator, independent of the trainer's own metric pass."""
    y = np.asarray(y)
    if len(y) == 0:
        raise DimensionError("cannot evaluate on an empty split")
    return float(np.mean(network.predict(model, X) == y))
