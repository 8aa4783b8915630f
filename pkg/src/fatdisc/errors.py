"""Exception hierarchy shared by the computational modules and the CLI."""


class FatDiscError(Exception):
    """Base class for every error raised by this package."""


class EvaluationError(FatDiscError):
    """A form or vector field produced non-finite values."""


class DegenerateDistributionError(FatDiscError):
    """The defining forms are not independent at a point."""


class DomainError(FatDiscError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(FatDiscError):
    """Required structure (e.g. Reeb fields) is missing or malformed."""


class DegeneracyError(FatDiscError):
    """A form that must be nondegenerate is (numerically) degenerate."""


class FrameError(FatDiscError):
    """The frame (X, Y, JX, JY) is ill-conditioned on some element."""

    def __init__(self, message, elements=()):
        super().__init__(message)
        self.elements = list(elements)


class EllipticityError(FatDiscError):
    """The reduced scalar problem is not elliptic on some element."""

    def __init__(self, message, elements=()):
        super().__init__(message)
        self.elements = list(elements)


class DiscretizationError(FatDiscError):
    """A discrete linear system could not be factorized."""


class CapabilityError(FatDiscError):
    """A request exceeds what the discretization supports."""


class AdmissibilityError(FatDiscError):
    """A map left the admissible set during an iteration."""

    def __init__(self, message, elements=()):
        super().__init__(message)
        self.elements = list(elements)


class StagnationError(FatDiscError):
    """Damped Newton could not decrease the residual."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class ScaleError(FatDiscError):
    """No cutoff radius resolvable by the mesh achieves the smallness bound."""


class ParseError(FatDiscError):
    """A configuration file or expression could not be parsed."""

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)
        self.location = location
