"""Exception hierarchy shared by the solvers and the harness."""

from __future__ import annotations


class RBSDEError(Exception):
    """Base class for every error raised by rbsdelab."""


class InvalidScenarioError(RBSDEError, ValueError):
    """Input data violates a standing assumption (barrier order, terminal range, ...).

    ``location`` names the offending node or time index when one is known.
    """

    def __init__(self, message: str, location=None):
        super().__init__(message)
        self.location = location


class SolverError(RBSDEError, RuntimeError):
    """A numerical routine failed to produce a solution."""


class IterationLimitError(SolverError):
    """An outer iteration did not converge within its budget.

    ``trace`` carries whatever the iteration recorded before giving up.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class NotAMartingaleError(RBSDEError, ValueError):
    """Input to the martingale representation is not a martingale."""


class EnumerationBudgetError(RBSDEError):
    """Exhaustive enumeration would exceed the configured budget."""
