"""Rankings, detection metrics, combination, retraining experiments and timing."""

from __future__ import annotations

from datalens.harness.combine import PRESETS, CombinationSpec, combine, minmax, preset, suspicion
from datalens.harness.diff import DetectionDiff, detection_diff
from datalens.harness.experiments import (
    AccuracyStats,
    ExperimentResult,
    correction_experiment,
    corrected_dataset,
    deleted_dataset,
    deletion_experiment,
    derive_seeds,
    retrain_accuracy,
)
from datalens.harness.grid import (
    Cell,
    CellReport,
    GridConfig,
    evaluate_scores,
    flipped_dataset,
    load_config,
    parse_config,
    run_cell,
)
from datalens.harness.ranking import (
    DIRECTIONS,
    TABLE_COLUMNS,
    InspectionResult,
    RankingSpec,
    default_ratios,
    detection_rate,
    inspect,
    inspected_count,
    inspection_curve,
    order_by_key,
    parse_ranking,
    rank,
    ranking_key,
)
from datalens.harness.timing import TimingEntry, TimingReport, timing_report

__all__ = [
    "DIRECTIONS", "PRESETS", "TABLE_COLUMNS",
    "AccuracyStats", "Cell", "CellReport", "CombinationSpec", "DetectionDiff", "ExperimentResult",
    "GridConfig", "InspectionResult", "RankingSpec", "TimingEntry", "TimingReport",
    "combine", "corrected_dataset", "correction_experiment", "default_ratios", "deleted_dataset",
    "deletion_experiment", "derive_seeds", "detection_diff", "detection_rate", "evaluate_scores",
    "flipped_dataset", "inspect", "inspected_count", "inspection_curve", "load_config", "minmax",
    "order_by_key", "parse_config", "parse_ranking", "preset", "rank", "ranking_key",
    "retrain_accuracy", "run_cell", "suspicion", "timing_report",
]
