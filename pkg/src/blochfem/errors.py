"""Exception types used across the package.

Everything raised on purpose derives from :class:`BlochFEMError`, so callers
can catch one base class at the CLI boundary and map it to an exit code.
"""

__all__ = [
    "BlochFEMError",
    "HermitianViolationError",
    "SingularMatrixError",
    "NearPoleError",
    "ShiftBoundError",
    "NonConvergenceError",
]


class BlochFEMError(Exception):
    """Base class for all package-specific errors."""


class HermitianViolationError(BlochFEMError):
    """A matrix flagged Hermitian failed the entrywise symmetry check."""


class SingularMatrixError(BlochFEMError):
    """Factorization hit a singular-to-working-precision matrix.

    In shift-invert contexts this usually means the shift landed exactly on
    an eigenvalue.
    """


class NearPoleError(BlochFEMError):
    """A dispersion model was evaluated too close to one of its real poles."""


class ShiftBoundError(BlochFEMError):
    """The requested shift violates the positivity bound of the extended
    (companion) system."""


class NonConvergenceError(BlochFEMError):
    """An iteration stopped without reaching its tolerance.

    The partial iteration trace is attached as ``.trace`` so drivers can
    persist what was computed before the failure.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
