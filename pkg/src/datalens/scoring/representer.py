"""Representer values from an L2-regularised refit of the final layer.

With features frozen, the final layer ``W`` (no bias) is refit to minimise
``mean_i L(W phi_i, y_i) + l2 * |W|^2``. At a stationary point

    W = sum_i alpha_i phi_i^T,   alpha_i = -(1 / (2 l2 n)) dL_i/df_i,

so every pre-softmax output ``f(x) = W phi(x)`` decomposes into per-sample
contributions ``alpha_i (phi_i . phi(x))``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from datalens.errors import ConfigError, ConvergenceError
from datalens.model import network
from datalens.model.architecture import ModelState
from datalens.numerics.solvers import cg_solve
from datalens.scoring.last_layer import SoftmaxRegression
from datalens.scoring.scores import ScoreVector

SEMANTICS = "low = inhibitory, high = excitatory"


@dataclass(frozen=True)
class RepresenterConfig:
    l2: float = 0.01
    # W - alpha^T Phi equals grad / (2 l2), so the decomposition error on a probe scales
    # with the gradient norm over |f(x_t)|; 1e-8 keeps near-boundary probes within 1e-4
    tol: float = 1e-8
    max_steps: int = 100

    def __post_init__(self):
        if not self.l2 > 0:
            raise ConfigError("representer l2 strength must be > 0")
        if not self.tol > 0 or self.max_steps < 1:
            raise ConfigError("tol must be > 0 and max_steps >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class RepresenterFit:
    weights: np.ndarray   # (k, d)
    alpha: np.ndarray     # (n, k)
    features: np.ndarray  # (n, d)
    labels: np.ndarray
    grad_norm: float
    steps: int

    def logits(self, probe_features: np.ndarray) -> np.ndarray:
        return probe_features @ self.weights.T

    def decompose(self, probe_features: np.ndarray) -> np.ndarray:
        """``sum_i alpha_i (phi_i . phi_t)`` for each probe row."""
        return (probe_features @ self.features.T) @ self.alpha

    def contributions(self, probe_feature: np.ndarray) -> np.ndarray:
        """Per-training-sample contribution to one probe's outputs, shape (n, k)."""
        return self.alpha * (self.features @ probe_feature)[:, None]


def refit_last_layer(features: np.ndarray, labels: np.ndarray, num_classes: int,
                     cfg: RepresenterConfig = RepresenterConfig(),
                     init: np.ndarray | None = None) -> RepresenterFit:
    """Newton-CG on the strongly convex refit objective."""
    prob = SoftmaxRegression(features, labels, num_classes, bias=False)
    l2 = cfg.l2

    def evaluate(theta):
        loss, g, p = prob.evaluate(theta)
        return loss + l2 * float(theta @ theta), g + 2 * l2 * theta, p

    theta = np.zeros(prob.dim) if init is None else np.array(init, dtype=np.float64).ravel()
    f, g, p = evaluate(theta)
    gnorm = float(np.linalg.norm(g))
    steps = 0
    while gnorm > cfg.tol:
        if steps >= cfg.max_steps:
            raise ConvergenceError(
                f"representer refit stopped after {steps} steps with gradient norm {gnorm:.3e}",
                iteration=steps, residual=gnorm)
        H = prob.hessian_operator(theta, probs=p)
        # superlinear forcing, but never solve tighter than the final tolerance needs
        forcing = max(min(0.5, np.sqrt(gnorm)), min(0.5, 0.5 * cfg.tol / gnorm))
        step = cg_solve(H, -g, damping=2 * l2, tol=forcing, max_iter=200).x
        slope = float(g @ step)
        t, accepted = 1.0, False
        for _ in range(40):
            cand = theta + t * step
            fc, gc, pc = evaluate(cand)
            if fc <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # at the rounding floor of J: take the full step if it still shrinks the gradient
            cand = theta + step
            fc, gc, pc = evaluate(cand)
            if np.linalg.norm(gc) >= gnorm:
                raise ConvergenceError(
                    f"representer line search failed at gradient norm {gnorm:.3e}",
                    iteration=steps, residual=gnorm)
        theta, f, g, p = cand, fc, gc, pc
        gnorm = float(np.linalg.norm(g))
        steps += 1
    W, _ = prob.unpack(theta)
    alpha = -prob.residuals(theta) / (2 * cfg.l2 * prob.n)
    return RepresenterFit(W.copy(), alpha, prob.features, prob.labels, gnorm, steps)


def representer_fit(model: ModelState, dataset, cfg: RepresenterConfig = RepresenterConfig()) -> RepresenterFit:
    X, y = dataset.split_arrays("train")
    phi = network.features(model, X)
    init = model.params.segment("out.weight")
    return refit_last_layer(phi, y, model.spec.num_classes, cfg, init)


def representer_scores(model: ModelState, dataset,
                       cfg: RepresenterConfig = RepresenterConfig()) -> ScoreVector:
    """Own-label component of each training sample's representer value."""
    fit = representer_fit(model, dataset, cfg)
    own = fit.alpha[np.arange(len(fit.labels)), fit.labels]
    meta = {**cfg.to_dict(), "grad_norm": fit.grad_norm, "steps": fit.steps}
    return ScoreVector("representer", own, SEMANTICS, False, meta)
