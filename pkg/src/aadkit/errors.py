"""Exception hierarchy shared across the toolkit.

CLI exit codes map onto these classes: ConfigurationError -> 2,
data errors (format/corruption/validation/resolution) -> 3,
NumericalError -> 4.
"""


class AadkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(AadkitError):
    """Invalid parameter or option (wrong sample rate, bad filter edges, ...)."""


class FormatError(AadkitError):
    """Byte stream is not a matrix file (bad magic or unsupported version)."""


class CorruptionError(AadkitError):
    """Matrix file header is valid but the payload is inconsistent."""


class ValidationError(AadkitError):
    """Data violates a documented invariant."""


class ResolutionError(AadkitError):
    """A referenced resource (file path) does not exist."""


class DegenerateRankError(ValidationError):
    """Input rank is too low for the requested decomposition."""

    def __init__(self, message: str, rank: int):
        super().__init__(message)
        self.rank = rank


class NumericalError(AadkitError):
    """A solver failed to produce a usable result."""
