"""Exception taxonomy shared across the package.

Every error raised by library code derives from :class:`SmoaError` so
callers (the CLI in particular) can map failure families to exit codes
without string matching.
"""


class SmoaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SmoaError):
    """Operand shapes do not conform; the message names both shapes."""


class RangeError(SmoaError):
    """An index, interval, or rank bound lies outside the valid range."""


class ConfigurationError(SmoaError):
    """Invalid parameter combination: divisibility, unknown scheme, stale pairing."""


class NumericalError(SmoaError):
    """Numerical failure: non-finite values or non-convergence."""


class EstimationError(NumericalError):
    """A statistical estimate could not be formed from the data."""


class FormatError(SmoaError):
    """Malformed or mislabeled artifact file."""
