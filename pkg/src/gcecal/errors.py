"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition or invariant."""


class FormatError(InvalidInputError):
    """Raised when a file cannot be parsed as one of the supported formats."""
