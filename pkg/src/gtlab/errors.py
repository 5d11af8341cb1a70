"""Exception types shared across the toolkit.

Input validation raises plain ValueError. The classes below mark
conditions the CLI maps to dedicated exit codes or that callers may
want to catch and recover from.
"""


class ToolkitError(Exception):
    """Base class for gtlab-specific failures."""


class InfeasibleSizeError(ToolkitError):
    """An exact computation would exceed its operation budget."""


class SieveMemoryError(ToolkitError):
    """A sieve build would exceed the configured memory budget."""


class CoverageError(ToolkitError):
    """A sieve table does not reach far enough for the request."""


class QuadratureError(ToolkitError):
    """Numerical quadrature failed to converge."""


class BoundaryBudgetError(ToolkitError):
    """No level-grid offset kept the boundary mass within budget."""

    def __init__(self, message, best_mass=None):
        super().__init__(message)
        self.best_mass = best_mass


class EnergyIncrementError(ToolkitError):
    """The decomposition energy failed to grow by the required step."""


class MaxIterationsError(ToolkitError):
    """The decomposition did not terminate within the iteration cap."""


class LiftRejected(ToolkitError):
    """A residue pattern could not be lifted to an integer progression."""
