"""Exceptions raised by the library. Each carries the process exit code the CLI maps it to."""

from __future__ import annotations


class CrpmError(Exception):
    "Base class for every error raised by crpmnet"

    exit_code = 1


class DimensionError(CrpmError):
    "Raised when tensor shapes or layer geometry do not chain"

    exit_code = 4


class NonFiniteError(CrpmError):
    "Raised when an operation produces or ingests NaN or Inf"

    exit_code = 4


class C3FormatError(CrpmError):
    "Raised when a C3 container is malformed or truncated"

    exit_code = 1


class ModelFormatError(CrpmError):
    "Raised when a model file is malformed"

    exit_code = 1


class ConfigError(CrpmError):
    "Raised when a configuration file or sidecar does not match its schema"

    exit_code = 2


class TrainingPreconditionError(CrpmError):
    "Raised when the training data cannot support a training run"

    exit_code = 3


class IncompatibleDataError(CrpmError):
    "Raised when a model, scene or prediction do not fit together"

    exit_code = 4


class EmptyMatrixError(CrpmError):
    "Raised when a confusion matrix holds no labeled pixels"

    exit_code = 4


class DegenerateMetricError(CrpmError):
    "Raised when a metric denominator vanishes"

    exit_code = 4


class GradientCheckFailed(CrpmError):  # noqa: N818
    "Raised when at least one analytic backward pass disagrees with finite differences"

    exit_code = 5
