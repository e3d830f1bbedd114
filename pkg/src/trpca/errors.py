"""Exception types shared across the package."""


class TrpcaError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatch(TrpcaError, ValueError):
    """Operands have incompatible shapes."""


class NonFinite(TrpcaError, ValueError):
    """Input contains NaN or infinite entries."""


class SymmetryViolation(TrpcaError, ValueError):
    """Frequency-domain data lost conjugate symmetry (inverse is not real)."""


class NonScalarLoss(TrpcaError, ValueError):
    """backward() was called on a node whose value is not a scalar."""


class EmptySelection(TrpcaError, ValueError):
    """Top-K selection would keep fewer than one channel."""


class MissingGrad(TrpcaError, ValueError):
    """Optimizer step requested for a parameter with no gradient."""


class RangeError(TrpcaError, ValueError):
    """Values fall outside the documented range (e.g. clean data not in [0,1])."""


class AllSpectraZero(TrpcaError, ValueError):
    """Every spatial position has a zero spectrum; spectral angle undefined."""


class WindowTooLarge(TrpcaError, ValueError):
    """Filter window exceeds the spatial extent of the image."""


class DataShapeMismatch(TrpcaError, ValueError):
    """Training samples disagree in shape."""
