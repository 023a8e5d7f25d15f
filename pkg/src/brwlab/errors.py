"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class UnsupportedRegimeError(ValueError):
    """The requested operation is not defined for this breeding exponent."""


class InfiniteExpectationError(ValueError):
    """The requested expectation diverges (p > 1)."""


class PreconditionError(RuntimeError):
    """Input data is missing something the operation needs."""
