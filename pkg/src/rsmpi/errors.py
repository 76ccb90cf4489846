"""Exception hierarchy shared by the solver modules and the CLI."""


class RsmpiError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(RsmpiError, ValueError):
    """An argument lies outside its admissible range."""


class PreconditionError(RsmpiError, ValueError):
    """The input violates a structural precondition (e.g. a periodic chain)."""


class DomainError(RsmpiError, ValueError):
    """A value is outside the domain of a closed-form map."""


class ConvergenceError(RsmpiError, RuntimeError):
    """An iterative method hit its iteration cap before meeting tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class SizeCapError(RsmpiError):
    """An enumeration would exceed the configured size cap."""


class DiagnosticUnavailable(RsmpiError):
    """A diagnostic cannot be computed from the supplied trace."""
