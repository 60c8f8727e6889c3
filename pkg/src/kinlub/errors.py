"""Exception types shared across the solver suite."""


class SolvabilityError(ValueError):
    """Right-hand side violates a solvability (compatibility) condition."""


class ConvergenceError(RuntimeError):
    """An iteration exceeded its cap before reaching tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class DivergenceError(ConvergenceError):
    """A fixed-point iteration with measured contraction >= 1."""


class ModelViolationError(RuntimeError):
    """A computed quantity contradicts a structural property of the model,
    e.g. a nonpositive transport coefficient or a non-monotone primitive."""


class TableRangeError(ValueError):
    """Requested evaluation outside a coefficient table's tabulated range."""
