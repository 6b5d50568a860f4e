"""Influence-function scores.

For a training sample ``i`` and reference set ``R`` the score is

    s_i = -(1/|R|) sum_{t in R} grad L(z_t)^T (H + damping I)^-1 grad L(z_i)

with ``H`` the Hessian of the mean training loss. The sum over references is
folded into a single right-hand side, so a global score vector costs one
inverse-HVP solve plus one directional-derivative pass over the training set.
The classwise variant restricts the references to those sharing sample
``i``'s observed label: one solve per class.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from datalens.errors import ConfigError, DimensionError
from datalens.model import network
from datalens.model.architecture import ModelState
from datalens.numerics.params import LinearOperator
from datalens.numerics.solvers import (
    SolveResult,
    cg_solve,
    ensure_nonsingular,
    estimate_spectral_radius,
    lissa_solve,
)
from datalens.scoring.last_layer import SoftmaxRegression
from datalens.scoring.scores import ScoreVector

log = logging.getLogger(__name__)

SEMANTICS = "low = harmful, high = helpful"


@dataclass(frozen=True)
class InfluenceConfig:
    damping: float = 0.01
    solver: str = "cg"
    scope: str = "last_layer"
    reference: str = "validation"
    cg_tol: float = 1e-8
    cg_max_iter: int = 1000
    lissa_scale: float | None = None  # None: 1.5 x power-iteration estimate
    lissa_depth: int = 1000
    lissa_repeats: int = 1
    lissa_batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.solver not in ("cg", "lissa"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.scope not in ("last_layer", "full"):
            raise ConfigError(f"unknown parameter scope {self.scope!r}")
        if self.reference not in ("validation", "test", "train_self"):
            raise ConfigError(f"unknown reference set {self.reference!r}")
        if self.damping < 0:
            raise ConfigError("damping must be >= 0")
        if self.scope == "full" and not self.damping > 0:
            raise ConfigError("full-network influence needs damping > 0")

    def to_dict(self) -> dict:
        return asdict(self)


class _Problem:
    """Training objective and reference data in the chosen parameter scope."""

    def __init__(self, model: ModelState, dataset, cfg: InfluenceConfig):
        self.model, self.cfg = model, cfg
        self.X, self.y = dataset.split_arrays("train")
        if len(self.X) == 0:
            raise DimensionError("dataset has no train split")
        if cfg.reference == "train_self":
            self.Xr, self.yr = self.X, self.y
        else:
            self.Xr, self.yr = dataset.split_arrays(cfg.reference)
        if len(self.Xr) == 0:
            raise DimensionError(f"reference split {cfg.reference!r} is empty")
        k = model.spec.num_classes
        if cfg.scope == "last_layer":
            W = model.params.segment("out.weight")
            b = model.params.segment("out.bias")
            self.theta = np.concatenate([W, b])
            self.train = SoftmaxRegression(network.features(model, self.X), self.y, k)
            self.ref = (self.train if cfg.reference == "train_self" else
                        SoftmaxRegression(network.features(model, self.Xr), self.yr, k))
            self.dim = self.train.dim
        else:
            self.dim = len(model.params)

    def hessian(self) -> LinearOperator:
        if self.cfg.scope == "last_layer":
            return self.train.hessian_operator(self.theta)
        X, y, model = self.X, self.y, self.model
        return LinearOperator(self.dim, lambda v: network.hvp_full(model, X, y, v).values)

    def minibatch_sampler(self):
        n, bs = len(self.y), min(self.cfg.lissa_batch_size, len(self.y))
        if self.cfg.scope == "last_layer":
            def sample(rng):
                idx = rng.choice(n, size=bs, replace=False)
                return self.train.hessian_operator(self.theta, idx)
        else:
            def sample(rng):
                idx = np.sort(rng.choice(n, size=bs, replace=False))
                Xb, yb, model = self.X[idx], self.y[idx], self.model
                return LinearOperator(self.dim,
                                      lambda v: network.hvp_full(model, Xb, yb, v).values)
        return sample

    def ref_mean_grad(self, idx: np.ndarray) -> np.ndarray:
        if self.cfg.scope == "last_layer":
            return self.ref.grad(self.theta, idx)
        return network.grad_full(self.model, self.Xr[idx], self.yr[idx]).values

    def directional(self, u: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
        if self.cfg.scope == "last_layer":
            return self.train.directional(self.theta, u, rows)
        X, y = (self.X, self.y) if rows is None else (self.X[rows], self.y[rows])
        return network.loss_directional_derivatives(self.model, X, y, u)

    def train_grads(self, rows: np.ndarray) -> np.ndarray:
        if self.cfg.scope == "last_layer":
            return self.train.per_sample_grads(self.theta, rows)
        return network.per_sample_grads(self.model, self.X[rows], self.y[rows])


class _Solver:
    def __init__(self, problem: _Problem, cfg: InfluenceConfig):
        self.cfg = cfg
        self.H = problem.hessian()
        if cfg.damping == 0:
            # a singular system is consistent for reference gradients, so CG would
            # quietly return one of many solutions; refuse instead
            ensure_nonsingular(self.H, 0.0)
        self.sampler = problem.minibatch_sampler() if cfg.solver == "lissa" else None
        self.scale = None
        if cfg.solver == "lissa":
            self.scale = cfg.lissa_scale or 1.5 * (
                estimate_spectral_radius(self.H, 100, cfg.seed) + cfg.damping)
        self.results: list[SolveResult] = []

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        c = self.cfg
        if c.solver == "cg":
            res = cg_solve(self.H, rhs, c.damping, c.cg_tol, c.cg_max_iter)
        else:
            res = lissa_solve(self.sampler, rhs, c.damping, self.scale, c.lissa_depth,
                              c.lissa_repeats, c.seed)
        self.results.append(res)
        return res.x

    def meta(self) -> dict:
        d = {"solves": len(self.results)}
        if self.cfg.solver == "cg" and self.results:
            d["max_relative_residual"] = max(r.relative_residual for r in self.results)
            d["max_iterations"] = max(r.iterations for r in self.results)
            d["all_converged"] = all(r.converged for r in self.results)
            if not d["all_converged"]:
                log.warning("influence solve did not converge (relative residual %.3e)",
                            d["max_relative_residual"])
        if self.scale is not None:
            d["lissa_scale"] = self.scale
        return d


def _self_influence(problem: _Problem, solve: _Solver) -> np.ndarray:
    n = len(problem.y)
    scores = np.empty(n)
    for a in range(0, n, 256):
        rows = np.arange(a, min(n, a + 256))
        G = problem.train_grads(rows)
        for j, g in enumerate(G):
            scores[a + j] = -float(g @ solve(g))
    return scores


def influence_scores(model: ModelState, dataset, cfg: InfluenceConfig = InfluenceConfig()) -> ScoreVector:
    """Global influence of every training sample on the mean reference loss."""
    problem = _Problem(model, dataset, cfg)
    solve = _Solver(problem, cfg)
    if cfg.reference == "train_self":
        values = _self_influence(problem, solve)
    else:
        u = solve(problem.ref_mean_grad(np.arange(len(problem.yr))))
        values = -problem.directional(u)
    meta = {**cfg.to_dict(), **solve.meta(), "n_reference": int(len(problem.yr))}
    return ScoreVector("influence", values, SEMANTICS, False, meta)


def classwise_influence_scores(model: ModelState, dataset,
                               cfg: InfluenceConfig = InfluenceConfig()) -> ScoreVector:
    """Influence restricted to reference samples of the training sample's own observed class."""
    problem = _Problem(model, dataset, cfg)
    solve = _Solver(problem, cfg)
    if cfg.reference == "train_self":
        # the sample itself always shares its own label
        values = _self_influence(problem, solve)
        meta = {**cfg.to_dict(), **solve.meta(), "missing_classes": []}
        return ScoreVector("classwise_influence", values, SEMANTICS, True, meta)
    values = np.zeros(len(problem.y))
    missing = []
    for c in range(model.spec.num_classes):
        members = np.flatnonzero(problem.y == c)
        if members.size == 0:
            continue
        refs = np.flatnonzero(problem.yr == c)
        if refs.size == 0:
            missing.append(c)
            warnings.warn(f"class {c} has no reference samples; its scores are set to 0",
                          RuntimeWarning, stacklevel=2)
            continue
        u = solve(problem.ref_mean_grad(refs))
        values[members] = -problem.directional(u, members)
    meta = {**cfg.to_dict(), **solve.meta(), "missing_classes": missing}
    return ScoreVector("classwise_influence", values, SEMANTICS, True, meta)
