"""Exception hierarchy shared by all solver modules."""

from __future__ import annotations


class CHControlError(Exception):
    """Base class for every error raised by the package."""


class ConformanceError(CHControlError, ValueError):
    """A field does not match the grid (or time grid) it is used with."""


class PreconditionError(CHControlError, ValueError):
    """An operation was called outside its domain of definition."""


class PotentialDomainError(CHControlError, ValueError):
    """A singular potential was evaluated outside the open interval (r-, r+)."""


class SolverError(CHControlError, RuntimeError):
    """An iterative solve did not reach its tolerance.

    The last residual norm is kept on the exception so callers can report it.
    """

    def __init__(self, message: str, residual: float | None = None, step: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class StateSolveError(SolverError):
    """Newton failure in a forward time step."""


class SeparationError(StateSolveError):
    """Clipping of the singular potential was still active at a converged step."""


class SensitivityError(SolverError):
    """Failure inside the linearized or adjoint solve."""


class LineSearchError(CHControlError, RuntimeError):
    """Armijo backtracking exhausted its halvings; the trace so far is attached."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(CHControlError, ValueError):
    """Invalid run configuration.  ``violations`` holds (field, value, constraint) triples."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{field} = {value!r}: {constraint}" for field, value, constraint in self.violations]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))
