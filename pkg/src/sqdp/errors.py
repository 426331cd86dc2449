"""Exception taxonomy shared by all solver components."""


class SqdpError(Exception):
    """Base class for all package errors."""


class InputError(SqdpError, ValueError):
    """Malformed user input: bad dimensions, invalid parameters, schema violations."""


class DimensionMismatchError(InputError):
    """Vector/matrix dimensions do not agree."""


class InvalidInstanceError(InputError):
    """Instance document violates the schema; carries the offending field path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ContractViolationError(SqdpError):
    """An internal contract was violated (e.g. mixed cut curvatures in one model)."""


class UnsupportedConfigurationError(SqdpError):
    """Requested configuration exists in the data model but cannot be solved end to end."""


class QpInfeasibleError(SqdpError):
    """The QP feasible region is empty; carries the minimal equality residual found."""

    def __init__(self, residual: float):
        super().__init__(f"infeasible QP: minimal equality residual {residual:.3e}")
        self.residual = residual


class QpNonconvergenceError(SqdpError):
    """The QP solver hit its iteration cap; carries the best KKT residual reached."""

    def __init__(self, best_residual: float):
        super().__init__(f"QP solver did not converge: best KKT residual {best_residual:.3e}")
        self.best_residual = best_residual


class NodeBudgetExceededError(SqdpError):
    """A scenario-tree operation would exceed the configured node budget."""

    def __init__(self, nodes: int, budget: int):
        super().__init__(f"scenario tree has {nodes} nodes, budget is {budget}")
        self.nodes = nodes
        self.budget = budget


class IterationCapError(SqdpError):
    """An iterative algorithm stopped on its iteration cap rather than its gap test."""
