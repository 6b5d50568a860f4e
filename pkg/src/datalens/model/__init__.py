"""Small 1-D CNN / MLP classifiers with seeded training."""

from datalens.model.architecture import FINAL_LAYER, ArchitectureSpec, ConvBlock, ModelState
from datalens.model.checkpoint import load_model, save_model
from datalens.model.network import (
    features,
    loss_directional_derivatives,
    per_sample_grads,
    predict,
    predict_logits,
    sample_losses,
)
from datalens.model.training import EpochMetrics, TrainConfig, accuracy, train, train_arrays


def per_sample_losses(model, dataset, split: str = "train"):
    """Cross-entropy of every sample in ``split`` under its observed label.

    Returned as a ScoreVector with "high = suspicious" semantics.
    """
    from datalens.scoring.scores import ScoreVector

    X, y = dataset.split_arrays(split)
    return ScoreVector("loss", sample_losses(model, X, y), "high = suspicious", False,
                       {"split": split})


__all__ = [
    "FINAL_LAYER",
    "ArchitectureSpec",
    "ConvBlock",
    "EpochMetrics",
    "ModelState",
    "TrainConfig",
    "accuracy",
    "features",
    "load_model",
    "loss_directional_derivatives",
    "per_sample_grads",
    "per_sample_losses",
    "predict",
    "predict_logits",
    "sample_losses",
    "save_model",
    "train",
    "train_arrays",
]
