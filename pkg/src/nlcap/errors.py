"""Exception and warning types raised across :mod:`nlcap`."""


class NlcapError(Exception):
    """Base class for all library errors."""


class InvalidParameter(NlcapError, ValueError):
    """A physical or numerical parameter violates its invariant."""


class NonConvergence(NlcapError, ArithmeticError):
    """An iterative kernel exhausted its budget before meeting tolerance.

    The best available estimate, if any, is attached as ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NonFiniteIntegrand(NlcapError, FloatingPointError):
    """The integrand returned NaN or infinity inside the integration domain."""


class InvalidBracket(NlcapError, ValueError):
    """Root bracket endpoints do not enclose a sign change."""


class ZeroInputSignal(NlcapError, ValueError):
    """The fluctuation frame is undefined for a zero input amplitude."""


class ZeroOutputSignal(NlcapError, ValueError):
    """An output-PDF formula with a 1/|Y|^2 factor was evaluated at Y = 0."""


class MissingPolarDerivatives(NlcapError, NotImplementedError):
    """A density does not provide the polar derivatives requested."""


class NegativeGammaTilde(NlcapError, ValueError):
    """The dimensionless nonlinearity must be non-negative."""


class DomainTooSmall(NlcapError, ValueError):
    """An asymptotic formula was requested outside its validity domain."""


class DegenerateDenominator(NlcapError, ZeroDivisionError):
    """A rational correction formula hit a vanishing denominator."""


class PerturbativeBreachWarning(UserWarning):
    """Too many Monte-Carlo samples fell outside the perturbative regime."""
