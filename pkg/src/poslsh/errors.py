"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside the documented domain."""


class ResourceLimitError(MemoryError):
    """A dense matrix would exceed the configured size cap."""


class ContractViolation(AssertionError):
    """An internal consistency check failed (e.g. non-symmetric residual)."""


class DegenerateRowError(ArithmeticError):
    """Every admissible weight in an attention row is zero."""

    def __init__(self, row):
        self.row = row
        super().__init__(f"row {row} has no admissible (causal-allowed, positive-weight) entry")
