"""Softmax regression on frozen features, in closed form.

This is the final dense layer of the classifier seen as a convex problem of
its own: gradients, Hessian products and per-sample derivatives need only the
feature matrix, so last-layer influence and the representer refit never touch
the convolutional stack after feature extraction.
"""

from __future__ import annotations

import numpy as np

from datalens.errors import DimensionError
from datalens.numerics import dual as D
from datalens.numerics.params import LinearOperator


class SoftmaxRegression:
    """Mean cross-entropy of ``logits = features @ W.T (+ b)``.

    Parameters are flat: ``W`` row-major (``num_classes x dim``) followed by
    ``b`` when ``bias`` is set, the same order as the model's final layer.
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray, num_classes: int,
                 bias: bool = True):
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise DimensionError("features must be (n, d) with one label per row")
        self.k = int(num_classes)
        self.bias = bias
        self.n, self.d = self.features.shape
        self.dim = self.k * (self.d + int(bias))
        self.onehot = np.eye(self.k)[self.labels]

    def unpack(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim,):
            raise DimensionError(f"expected {self.dim} parameters, got {theta.shape}")
        W = theta[:self.k * self.d].reshape(self.k, self.d)
        b = theta[self.k * self.d:] if self.bias else None
        return W, b

    def pack(self, gW: np.ndarray, gb: np.ndarray | None) -> np.ndarray:
        return np.concatenate([gW.ravel(), gb]) if self.bias else gW.ravel().copy()

    def _rows(self, idx):
        if idx is None:
            return self.features, self.onehot
        return self.features[idx], self.onehot[idx]

    def logits(self, theta, idx=None) -> np.ndarray:
        W, b = self.unpack(theta)
        F, _ = self._rows(idx)
        z = F @ W.T
        return z + b if b is not None else z

    def sample_losses(self, theta, idx=None) -> np.ndarray:
        _, Y = self._rows(idx)
        return -(D.log_softmax(self.logits(theta, idx)) * Y).sum(axis=1)

    def loss(self, theta, idx=None) -> float:
        return float(self.sample_losses(theta, idx).mean())

    def residuals(self, theta, idx=None) -> np.ndarray:
        """``softmax(logits) - onehot``: the per-sample loss derivative w.r.t. logits."""
        _, Y = self._rows(idx)
        return D.softmax(self.logits(theta, idx)) - Y

    def grad(self, theta, idx=None) -> np.ndarray:
        F, _ = self._rows(idx)
        R = self.residuals(theta, idx) / len(F)
        return self.pack(R.T @ F, R.sum(axis=0) if self.bias else None)

    def hvp(self, theta, v, idx=None, probs: np.ndarray | None = None) -> np.ndarray:
        F, _ = self._rows(idx)
        p = D.softmax(self.logits(theta, idx)) if probs is None else probs
        V, c = self.unpack(v)
        Z = F @ V.T
        if c is not None:
            Z = Z + c
        A = (p * Z - p * (p * Z).sum(axis=1, keepdims=True)) / len(F)
        return self.pack(A.T @ F, A.sum(axis=0) if self.bias else None)

    def hessian_operator(self, theta, idx=None, probs: np.ndarray | None = None) -> LinearOperator:
        p = D.softmax(self.logits(theta, idx)) if probs is None else probs
        return LinearOperator(self.dim, lambda v: self.hvp(theta, v, idx, probs=p))

    def evaluate(self, theta) -> tuple[float, np.ndarray, np.ndarray]:
        """Mean loss, gradient and probabilities from a single logit pass."""
        z = self.logits(theta)
        logp = D.log_softmax(z)
        p = np.exp(logp)
        loss = float(-(logp * self.onehot).sum(axis=1).mean())
        R = (p - self.onehot) / self.n
        return loss, self.pack(R.T @ self.features, R.sum(axis=0) if self.bias else None), p

    def directional(self, theta, u, idx=None) -> np.ndarray:
        """Per-sample ``grad L_i . u`` without forming per-sample gradients."""
        F, _ = self._rows(idx)
        U, c = self.unpack(u)
        Zu = F @ U.T
        if c is not None:
            Zu = Zu + c
        return (self.residuals(theta, idx) * Zu).sum(axis=1)

    def per_sample_grads(self, theta, idx=None) -> np.ndarray:
        F, _ = self._rows(idx)
        R = self.residuals(theta, idx)
        G = (R[:, :, None] * F[:, None, :]).reshape(len(F), -1)
        return np.concatenate([G, R], axis=1) if self.bias else G
