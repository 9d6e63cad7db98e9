"""Shared exception types."""


class DomainError(ValueError):
    """An input falls outside the mathematical domain of an operation."""


class SizeCapError(RuntimeError):
    """A combinatorial enumeration would exceed its configured budget."""


class InfeasibleError(RuntimeError):
    """The requested optimization problem has an empty feasible set."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance.

    Carries the best primal/dual bound pair seen so far, when available.
    """

    def __init__(self, message, best_dual=None, best_primal=None):
        super().__init__(message)
        self.best_dual = best_dual
        self.best_primal = best_primal
