"""Exception hierarchy shared across the package.

Each class maps onto one CLI exit code family (see cli.py).
"""


class HeavecastError(Exception):
    """Base class for everything raised on purpose by this package."""


class ConfigError(HeavecastError):
    """Invalid or inconsistent configuration (specs, bands, fold counts)."""


class DataError(HeavecastError):
    """Missing channels, malformed files, inadmissible indices."""


class DomainError(HeavecastError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericError(HeavecastError):
    """Non-finite values detected in numerical state or gradients."""

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{message} ({where})")
        self.where = where


class StructuralError(HeavecastError):
    """Shape or topology mismatch between tensors and layer definitions."""


class UsageError(HeavecastError):
    """API misuse, e.g. backward() without a cached forward pass."""


class UndefinedScoreError(HeavecastError):
    """A metric is undefined for the given inputs (zero-variance truth)."""


class ArtifactExistsError(HeavecastError):
    """Output location already populated and no force flag was given."""
