"""Exception types shared across the package."""


class StarclustError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(StarclustError):
    """Bad input data or configuration: malformed files, gaps, contract violations."""


class NumericalError(StarclustError):
    """Numerical failure: non-finite values, degenerate systems that cannot be recovered."""
