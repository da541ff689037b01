"""Exception hierarchy.

Configuration-class errors map to CLI exit code 2 (bad input/usage),
everything else raised by the package maps to exit code 1.
"""


class EigenwaveError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EigenwaveError):
    """Invalid parameters, dimension mismatches, bad config values."""


class FormatError(ConfigurationError):
    """Malformed or truncated binary/text file."""


class NumericError(EigenwaveError):
    """Numerical failure (non-finite input, decomposition breakdown)."""


class IllConditionedSubchannelError(NumericError):
    """A kept subchannel gain is too small to divide by; truncate the
    eigensystem (by count or energy) and retry."""


class CapacityError(ConfigurationError):
    """More symbols than available carriers."""
