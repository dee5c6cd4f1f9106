"""Exception hierarchy shared across the package."""


class PrivboundError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PrivboundError, ValueError):
    """Inputs violate a construction contract (mass, shape, range, index)."""


class RegimeError(PrivboundError):
    """An operation was called outside its epsilon regime."""


class SizeCapError(PrivboundError):
    """A dense tensor would exceed the configured size cap."""


class AlphabetMismatchError(PrivboundError):
    """A mechanism does not match the problem's alphabets."""


class SchemaError(PrivboundError, ValueError):
    """A problem or mechanism file does not parse against its schema."""
