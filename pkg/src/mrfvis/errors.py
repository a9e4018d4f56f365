"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: configuration problems exit 2,
numerical failures exit 3, I/O and file-format problems exit 4.
"""


class MrfvisError(Exception):
    """Base class for all toolkit errors."""


class DomainError(MrfvisError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(MrfvisError):
    """Invalid, unknown or inconsistent run configuration."""


class NumericalError(MrfvisError):
    """A numerical routine failed to converge or produced non-finite values."""


class DegenerateGeometryError(NumericalError):
    """Point configuration is rank-deficient for the requested fit."""


class FileFormatError(MrfvisError):
    """A file exists but its contents do not match the expected format."""
