"""Exception types raised across the package."""

from __future__ import annotations


class CorrDynError(Exception):
    """Base class for all package errors."""


class DataError(CorrDynError, ValueError):
    """Input data violates a panel or matrix invariant."""


class ZeroVarianceError(DataError):
    """A series has zero standard deviation where normalisation needs it."""

    def __init__(self, message: str, *, asset: str | None = None,
                 window: int | None = None, eigen_index: int | None = None):
        super().__init__(message)
        self.asset = asset
        self.window = window
        self.eigen_index = eigen_index


class NotPositiveDefiniteError(CorrDynError, ValueError):
    """Cholesky factorisation hit a non-positive pivot."""

    def __init__(self, message: str, *, pivot: int):
        super().__init__(message)
        self.pivot = pivot


class ConvergenceError(CorrDynError, RuntimeError):
    """The symmetric eigensolver did not converge."""

    def __init__(self, message: str, *, window: int | None = None):
        super().__init__(message)
        self.window = window


class ConfigError(CorrDynError, ValueError):
    """A run or model configuration is invalid."""
