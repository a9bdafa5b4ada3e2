"""Exception types shared across the package."""


class SHS6VError(Exception):
    """Base class for all package errors."""


class ParameterError(SHS6VError):
    """Parameters outside the admissible (stochastic) region."""


class StochasticityError(SHS6VError):
    """A weight row failed validation; carries the offending row."""

    def __init__(self, message, row=None, deviation=None):
        super().__init__(message)
        self.row = row
        self.deviation = deviation


class WindowOverflow(SHS6VError):
    """A particle or line would leave the right edge of a window."""


class TruncationError(SHS6VError):
    """A truncated-lattice bound exceeds the requested tolerance."""


class StateSpaceTooLarge(SHS6VError):
    """Exact enumeration was asked for an infeasibly large window."""


class QuadratureNotConverged(SHS6VError):
    """Contour quadrature did not stabilize under node doubling."""


class PoleOnContour(SHS6VError):
    """An integrand pole sits (numerically) on a quadrature contour."""


class DegenerateTilt(SHS6VError):
    """A tilt normalizer denominator vanished."""


class KernelMismatch(SHS6VError):
    """Two supposedly-equal martingale expressions disagree."""


class BracketError(SHS6VError):
    """Root bracketing failed (argument outside the solvable range)."""


class WindowUnderflow(SHS6VError):
    """An experiment window is too small for the requested horizon."""
