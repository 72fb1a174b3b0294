"""Errors raised by the mfpca package."""
from __future__ import annotations


class MfpcaError(ValueError):
    """Base class for all mfpca errors."""

    exit_code = 1


class InvalidArgument(MfpcaError):
    """An argument is outside the range the operation accepts."""

    exit_code = 2


class InsufficientData(MfpcaError):
    """Too few observations for the requested fit."""

    exit_code = 3


class GridMismatch(MfpcaError):
    """Curves or surfaces are not defined on the same grid."""

    exit_code = 4


class ShapeError(MfpcaError):
    """Array shapes are inconsistent."""

    exit_code = 5


class EmptyVisit(MfpcaError):
    """A visit index has no observed curve."""

    exit_code = 6


class NoWithinPairs(MfpcaError):
    """No subject has two visits, the between covariance is not estimable."""

    exit_code = 7


class AsymmetricInput(MfpcaError):
    """A covariance surface is not symmetric."""

    exit_code = 8


class NoVariance(MfpcaError):
    """All eigenvalues are zero."""

    exit_code = 9


class InvalidVariance(MfpcaError):
    """A variance component is not positive."""

    exit_code = 10


class SingularSystem(MfpcaError):
    """The mixed-model equations of a subject block cannot be solved."""

    exit_code = 11

    def __init__(self, message: str, subject_index: int | None = None) -> None:
        super().__init__(message)
        self.subject_index = subject_index


class SeparationDetected(MfpcaError):
    """The logistic likelihood has no finite maximum."""

    exit_code = 12


class RankDeficient(MfpcaError):
    """The regression design matrix does not have full column rank."""

    exit_code = 13


class BandPowerUndefined(MfpcaError):
    """A window carries no power in any band."""

    exit_code = 14

    def __init__(self, message: str, window_index: int | None = None) -> None:
        super().__init__(message)
        self.window_index = window_index


class DuplicateRow(MfpcaError):
    """The same (subject, visit, t) appears twice in a sample file."""

    exit_code = 15

    def __init__(self, message: str, line_number: int | None = None) -> None:
        super().__init__(message)
        self.line_number = line_number


class RangeError(MfpcaError):
    """A sampling point falls outside [0, 1]."""

    exit_code = 16
