"""Exception types shared across the package."""


class NumericFailure(ArithmeticError):
    """Raised when an iterative solver produces non-finite values."""


class IdxFormatError(ValueError):
    """Malformed IDX file. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ContainerFormatError(ValueError):
    """Malformed binary container (VSAC / CSCD / CSCA / WHTN)."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class DegenerateTemplate(ValueError):
    """An object template encodes to the zero vector."""
