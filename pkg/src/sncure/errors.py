"""Exception hierarchy shared by all estimation stages."""


class SncureError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SncureError):
    """Input data violates a panel invariant."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class EmptyData(SncureError):
    pass


class WidthMismatch(SncureError):
    pass


class DegenerateDesign(SncureError):
    """The weighted design cannot identify the requested regression."""


class DegenerateDenominator(SncureError):
    """A closed-form estimating-equation solve has a (near) zero denominator."""


class OutOfWindow(SncureError):
    pass


class MissingHistory(SncureError):
    pass


class TooFewIndividuals(SncureError):
    pass


class ZeroVariance(SncureError):
    pass


class DimensionMismatch(SncureError):
    pass


class BootstrapFailure(SncureError):
    """Too many bootstrap replicates could not be fitted."""
