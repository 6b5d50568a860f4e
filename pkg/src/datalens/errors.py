"""Exception hierarchy shared by every datalens subpackage."""

from __future__ import annotations


class DatalensError(Exception):
    """Base class for all errors raised by datalens."""

    code = "datalens_error"


class DimensionError(DatalensError, ValueError):
    code = "dimension_mismatch"


class NonFiniteLossError(DatalensError, FloatingPointError):
    """A loss evaluated to NaN/inf.

    ``sample_index`` is the position of the first offending sample inside the
    batch; ``epoch``/``batch`` are filled in by the trainer when available.
    """

    code = "non_finite_loss"

    def __init__(self, message: str, *, sample_index: int | None = None,
                 epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.sample_index = sample_index
        self.epoch = epoch
        self.batch = batch


class SolverError(DatalensError, ArithmeticError):
    code = "solver_error"

    def __init__(self, message: str, *, iteration: int | None = None,
                 residual: float | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.residual = residual


class DivergenceError(SolverError):
    code = "solver_diverged"


class ConvergenceError(SolverError):
    code = "solver_not_converged"


class ParseError(DatalensError, ValueError):
    code = "parse_error"

    def __init__(self, message: str, *, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(DatalensError, ValueError):
    code = "config_error"


class ArtifactError(DatalensError):
    """Missing, corrupt or incompatible on-disk artifact."""

    code = "artifact_error"


class StageVersionError(ArtifactError):
    code = "stage_version_mismatch"


class MetricError(DatalensError, ValueError):
    code = "undefined_metric"


class ExperimentError(DatalensError, ValueError):
    """An experiment setup that cannot produce a meaningful result."""

    code = "experiment_error"
