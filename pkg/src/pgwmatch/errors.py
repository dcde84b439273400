"""Exception types shared across the package."""


class PGWError(Exception):
    """Base class for all package errors."""


class ValidationError(PGWError, ValueError):
    """Invalid input data or configuration."""


class NumericalError(PGWError, ArithmeticError):
    """A numerical failure such as a vanished plan or a non-finite gradient."""
