"""Per-sample suspicion scores: loss, influence functions, representer values, random."""

from __future__ import annotations

from datalens.scoring.baselines import loss_scores, random_scores
from datalens.scoring.influence import (
    InfluenceConfig,
    classwise_influence_scores,
    influence_scores,
)
from datalens.scoring.last_layer import SoftmaxRegression
from datalens.scoring.representer import (
    RepresenterConfig,
    RepresenterFit,
    refit_last_layer,
    representer_fit,
    representer_scores,
)
from datalens.scoring.scores import ScoreVector, read_scores, write_scores

METHODS = ("loss", "influence", "classwise_influence", "representer", "random")


def compute_scores(method: str, model, dataset, *, influence: InfluenceConfig | None = None,
                   representer: RepresenterConfig | None = None, seed: int = 0) -> ScoreVector:
    """Dispatch on a method identifier from :data:`METHODS`."""
    if method == "loss":
        return loss_scores(model, dataset)
    if method == "influence":
        return influence_scores(model, dataset, influence or InfluenceConfig())
    if method == "classwise_influence":
        return classwise_influence_scores(model, dataset, influence or InfluenceConfig())
    if method == "representer":
        return representer_scores(model, dataset, representer or RepresenterConfig())
    if method == "random":
        return random_scores(dataset.size("train"), seed)
    raise KeyError(f"unknown scoring method {method!r}; choose from {METHODS}")


__all__ = [
    "METHODS",
    "InfluenceConfig",
    "RepresenterConfig",
    "RepresenterFit",
    "ScoreVector",
    "SoftmaxRegression",
    "classwise_influence_scores",
    "compute_scores",
    "influence_scores",
    "loss_scores",
    "random_scores",
    "read_scores",
    "refit_last_layer",
    "representer_fit",
    "representer_scores",
    "write_scores",
]
