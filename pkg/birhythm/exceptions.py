"""Exceptions raised by the toolkit."""


class BirhythmError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class ConfigError(BirhythmError):
    """Invalid run configuration."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ParameterError(ConfigError, ValueError):
    """Invalid parameter record.

    Carries a mapping of field name to message, the same shape as a form
    validation error.
    """

    def __init__(self, errors):
        self.errors = dict(errors)
        message = "; ".join(f"{field}: {text}" for field, text in self.errors.items())
        super().__init__(message, key=next(iter(self.errors), None))


class NumericalError(BirhythmError):
    """Base class for numerical failures."""


class DomainEscape(NumericalError):
    """The state left the region where the vector field is defined."""


class StepSizeUnderflow(NumericalError):
    """The adaptive step collapsed, usually a sign of stiffness or blow-up."""


class NoCrossing(NumericalError):
    """A trajectory never crossed the requested section."""


class NoConvergence(NumericalError):
    """An iterative solve did not reach its tolerance."""


class NotPeriodic(NumericalError):
    """A trajectory did not settle onto a limit cycle."""


class ConvergedToEquilibrium(NotPeriodic):
    """The trajectory collapsed onto an equilibrium instead of a cycle."""


class WrongBasin(NumericalError):
    """A seed was not in the basin required by the search."""


class Ambiguous(NumericalError):
    """Attractors found from the seed fan are inconsistent."""


class AmbiguousAnchor(NumericalError):
    """The maximum of x on a cycle is not unique."""


class NotOnCycle(NumericalError):
    """A state is too far from the cycle to carry a phase."""


class NoSeparatrix(NumericalError):
    """No unstable cycle separates two stable cycles at these parameters."""


class NoOnset(NumericalError):
    """Basin instability never appears along the path."""


class PathOutOfRegion(NumericalError):
    """The input drives the parameter out of the birhythmic region."""
