"""Exception hierarchy.

Errors are grouped by how a caller should react: configuration problems
(fix the inputs), data problems (fix the file), numerical failures
(inspect the fit).  The CLI maps these groups onto exit codes 2, 3, 4.
"""

from __future__ import annotations


class TVInferError(Exception):
    """Base class for all library errors.

    Parameters
    ----------
    message : str
        Human-readable description.
    stage : str, optional
        Pipeline stage that raised, filled in by orchestration code so a
        failure inside a composite call names the component responsible.
    """

    exit_code = 1

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self):
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class ConfigError(TVInferError):
    """Invalid configuration or arguments, detected before any compute."""

    exit_code = 2


class BoundaryError(ConfigError):
    """A test location lies outside the interior domain [b_n, 1 - b_n]."""


class DegenerateBandwidthError(ConfigError):
    """The kernel neighborhood is empty or too small to fit anything."""


class DataError(TVInferError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class NumericalError(TVInferError):
    """A numerical routine failed to produce a usable result."""

    exit_code = 4


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap before meeting tolerance.

    Carries the last iterate and the residual that was still violated so
    callers can inspect how close the solver got.
    """

    def __init__(self, message, last_iterate=None, residual=None, trace=None,
                 stage=None):
        super().__init__(message, stage=stage)
        self.last_iterate = last_iterate
        self.residual = residual
        self.trace = trace


class DegenerateVarianceError(NumericalError):
    """A coordinate has zero variance where a test statistic needs one.

    ``index`` names the offending coordinate (0-based).
    """

    def __init__(self, message, index=None, stage=None):
        super().__init__(message, stage=stage)
        self.index = index
