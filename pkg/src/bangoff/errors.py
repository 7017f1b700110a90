"""Exception types shared across the package."""


class BangoffError(Exception):
    """Base class for all package errors."""


class InvalidInputError(BangoffError):
    """Malformed or out-of-domain input (bad dimensions, negative times, ...)."""


class OutOfRegimeError(InvalidInputError):
    """Parameters outside the regime where an analytic formula is defined."""


class NumericalFailureError(BangoffError):
    """An iterative numerical routine failed to converge."""


class ResourceLimitError(BangoffError):
    """A requested computation exceeds a configured size cap."""


class BracketingError(BangoffError):
    """A bisection bracket does not enclose the requested crossing."""
