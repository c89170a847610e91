"""Exception hierarchy shared by all modules.

Each class carries the process exit code the command-line front-end maps it to.
"""


class CovmatchError(Exception):
    exit_code = 1


class ParameterError(CovmatchError, ValueError):
    """An argument lies outside the domain where the operation is defined."""

    exit_code = 2


class DataError(CovmatchError, ValueError):
    """Input data is malformed, non-finite, or has inconsistent shape."""

    exit_code = 3


class NumericalError(CovmatchError, ArithmeticError):
    """A factorization or iterative solve failed."""

    exit_code = 4


class PropertyViolation(CovmatchError, AssertionError):
    """A checked theoretical property did not hold within tolerance."""

    exit_code = 4
