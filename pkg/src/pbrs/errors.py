class ConfigurationError(ValueError):
    """Invalid or inconsistent parameters (e.g. a bias with gamma == 1)."""


class ContractViolation(ValueError):
    """A caller broke an operation's precondition."""


class NumericFault(ArithmeticError):
    """A non-finite value appeared in a state, loss or parameter."""

    def __init__(self, message: str, **metadata):
        super().__init__(message)
        self.metadata = metadata


class CoverageError(KeyError):
    """A tabulated potential is missing a required state."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual
