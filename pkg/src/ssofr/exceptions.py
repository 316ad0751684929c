"""Exception hierarchy.

ValidationError covers bad user input (shapes, enums, missing files);
NumericalError covers failures of the numerics (singularity, divergence).
The CLI maps the former to exit code 2 and the latter to exit code 3.
"""


class SsofrError(Exception):
    """Base class for all package errors."""


class ValidationError(SsofrError):
    """Invalid input: shapes, ranges, formats, missing data."""


class NumericalError(SsofrError):
    """Numerical failure during computation."""


class SingularGramError(NumericalError):
    """Basis Gram matrix is numerically singular."""


class RankDeficiencyError(NumericalError):
    """Design or evaluation matrix is rank deficient."""


class DegenerateDataError(NumericalError):
    """Data carries no usable variation for the requested operation."""


class NonConvergenceError(NumericalError):
    """Iterative procedure failed to converge within its iteration cap."""
