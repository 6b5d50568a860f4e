from __future__ import annotations

import numpy as np

from datalens.scoring.scores import ScoreVector


def loss_scores(model, dataset) -> ScoreVector:
    """Training-split cross-entropy under the observed labels."""
    from datalens.model import per_sample_losses

    return per_sample_losses(model, dataset, "train")


def random_scores(n: int, seed: int = 0) -> ScoreVector:
    values = np.random.default_rng(seed).random(n)
    return ScoreVector("random", values, "uniform baseline", False, {"seed": int(seed)})

