"""Exception types shared across the package."""


class IirplError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(IirplError):
    """A design specification file could not be parsed or validated."""


class BandTooNarrow(IirplError):
    """A frequency band cannot hold the requested number of sample points."""


class PoleOnGrid(IirplError):
    """A denominator magnitude underflowed at a grid frequency."""


class DegenerateSection(IirplError):
    """A section's delay denominator vanished; group delay is undefined there."""


class DimensionMismatch(IirplError):
    """Assembled matrices disagree about the number of variables or rows."""


class InfeasibleStart(IirplError):
    """The current iterate violates the stability margins it must start inside."""


class InfeasibleSpec(IirplError):
    """No filter within the allowed order budget can meet the requested bands."""


class SubproblemFailed(IirplError):
    """The cone solver broke down on several consecutive iterations."""


class NumericalBreakdown(IirplError):
    """The interior-point linear algebra lost positive definiteness beyond repair."""


class IllConditioned(IirplError):
    """A balanced-truncation Gramian is too ill-conditioned to reduce reliably."""
