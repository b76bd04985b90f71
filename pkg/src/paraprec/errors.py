"""Exception types shared across the package."""


class ParaprecError(Exception):
    """Base class for all package errors."""


class SingularOperator(ParaprecError):
    """Factorization hit an exactly or nearly singular pivot."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class NotSPD(ParaprecError):
    """A matrix required to be symmetric positive definite is not."""


class InvalidSize(ParaprecError):
    """Size argument violates a structural requirement (e.g. not a power of 2)."""


class InvalidArgument(ParaprecError):
    """Scalar argument outside its admissible range."""


class SketchTooSmall(ParaprecError):
    """Sketch has fewer columns than interpolation points (K < m)."""


class KappaTooSmall(ParaprecError):
    """Requested condition bound is below max_i C_i / gamma^-_i, so the
    constrained feasible set need not contain the sampled inverses."""


class ConvergenceFailure(ParaprecError):
    """Iterative eigen/singular value estimation did not converge."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateTestSpace(ParaprecError):
    """Preconditioned test space is rank deficient."""


class SingularReducedSystem(ParaprecError):
    """Reduced system matrix is singular at the given parameter."""

    def __init__(self, message, xi=None):
        super().__init__(message)
        self.xi = xi


class GenerationFailed(ParaprecError):
    """Random problem generation failed the nonsingularity spot-check."""


class EmptyMatrix(ParaprecError):
    """Matrix Market file contains a header but no matrix data."""
