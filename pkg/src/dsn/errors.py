"""Typed exceptions shared across the package.

The CLI maps these onto exit codes: DataError -> 2, VerificationError -> 3.
Everything else that is not a usage error is a bug and escapes as itself.
"""


class DsnError(Exception):
    """Base class for all package errors."""


class ShapeError(DsnError):
    """An array argument has the wrong shape or dtype."""


class NumericError(DsnError):
    """An array argument contains NaN or Inf, or a scalar is out of range."""


class ConfigError(DsnError):
    """A configuration value or key is invalid."""


class DataError(DsnError):
    """An input file (WAV, sidecar, weights, config file) is malformed."""


class WeightFormatError(DataError):
    """A weight file is missing tensors, has extras, or shapes disagree."""


class VerificationError(DsnError):
    """A self-check (gradcheck, selftest) failed its tolerance."""
