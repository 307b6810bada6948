"""Exception types raised by the estimators and their helpers."""


class KroncovError(Exception):
    """Base class for all package errors."""


class InvalidSpdMatrix(KroncovError, ValueError):
    """Input is not symmetric positive definite within tolerance."""


class DimensionMismatch(KroncovError, ValueError):
    pass


class RankDeficientUpdate(KroncovError):
    """A flip-flop update right-hand side is singular.

    Raised when the smallest eigenvalue of an update falls below
    ``eps_rank * spectral_norm``; this is the structural signature of too
    few samples for the requested factor dimensions.
    """

    def __init__(self, side, min_eig=None, max_eig=None):
        self.side = side
        self.min_eig = min_eig
        self.max_eig = max_eig
        msg = f"rank-deficient {side}-factor update"
        if min_eig is not None and max_eig is not None:
            msg += f" (min eig {min_eig:.3e}, max eig {max_eig:.3e})"
        super().__init__(msg)


class ZeroSample(KroncovError, ValueError):
    """A zero sample was passed to the robust objective."""


class MissingWitness(KroncovError, ValueError):
    """No collinearity witness exists for the boundary probe."""


class SampleFileError(KroncovError, ValueError):
    """Malformed sample or config file."""
