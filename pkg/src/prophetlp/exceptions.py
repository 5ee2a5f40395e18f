from typing import Any


class ProphetLabError(Exception):
    """Base class for exceptions in this module."""


class StructuralError(ProphetLabError):
    """Raised when input is malformed or shapes do not match."""


class ParseError(StructuralError):
    """Raised when an instance, interim or report document cannot be parsed."""


class DomainError(ProphetLabError):
    """Raised when an argument lies outside its mathematical domain."""


class BudgetExceeded(ProphetLabError):
    """Raised when an enumeration would exceed the desk-scale budget."""

    def __init__(self, what: str, count: int, budget: int):
        super().__init__(f"{what}: {count} exceeds budget of {budget}")
        self.count = count
        self.budget = budget


class UnboundedProblem(ProphetLabError):
    """Raised when an LP that must have a finite optimum is unbounded."""


class PrefixNotImplementable(ProphetLabError):
    """Raised when the stage LP is infeasible because the prefix itself is not implementable."""


class NotImplementable(ProphetLabError):
    """Raised when a policy is requested for an interim allocation that is not implementable."""


class InvalidOracle(ProphetLabError):
    """Raised when a submodular oracle is found to violate its validity properties."""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class SolverError(ProphetLabError):
    """Raised when the simplex produces a point that fails exact verification."""


class InconsistentChecks(ProphetLabError):
    """Raised when the sequential and direct implementability checks disagree."""
