"""Datasets: synthetic generators, delimited ingestion and label-flip injection."""

from datalens.data.dataset import (
    DATASET_PROPERTIES,
    SPLITS,
    TimeSeriesDataset,
    check_properties,
    concat_splits,
    load_dataset,
    save_dataset,
)
from datalens.data.delimited import DelimitedSchema, load_delimited, load_splits, write_delimited
from datalens.data.flips import FlipSpec, flip_labels
from datalens.data.synthetic import generate_anomaly_dataset, generate_multiclass_dataset

__all__ = [
    "DATASET_PROPERTIES",
    "SPLITS",
    "DelimitedSchema",
    "FlipSpec",
    "TimeSeriesDataset",
    "check_properties",
    "concat_splits",
    "flip_labels",
    "generate_anomaly_dataset",
    "generate_multiclass_dataset",
    "load_dataset",
    "load_delimited",
    "load_splits",
    "save_dataset",
    "write_delimited",
]
