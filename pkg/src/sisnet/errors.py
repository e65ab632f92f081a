"""Exception types raised across the package."""


class SisnetError(Exception):
    """Base class for every error raised by sisnet."""


class InvalidInputError(SisnetError, ValueError):
    """An argument is outside the documented domain (size, radius, partition...)."""


class SizeCapError(InvalidInputError):
    """The exact chain was requested for more agents than the memory guard allows."""


class PreconditionError(SisnetError):
    """A stability check was applied to a system that violates its hypotheses."""


class NumericalFailure(SisnetError, ArithmeticError):
    """An integrator or eigensolver produced an unusable result.

    ``diagnostics`` carries whatever the failing routine knew at the time
    (time, step size, simplex defect, ...).
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} ({extra})"


class ScenarioError(InvalidInputError):
    """A scenario document failed to parse or validate."""
