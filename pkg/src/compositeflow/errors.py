"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical divergence with 3.
"""


class CompositeFlowError(Exception):
    pass


class UsageError(CompositeFlowError, ValueError):
    """Bad call: dimension mismatch, invalid argument, unsupported mode."""


class ConfigError(CompositeFlowError, ValueError):
    """A configuration value violates the schema or an algorithm constraint."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NumericalError(CompositeFlowError, ArithmeticError):
    """An iterative routine failed to reach its tolerance.

    ``estimate`` carries the last iterate or value, ``residual`` the last
    measured residual.
    """

    def __init__(self, message, estimate=None, residual=None):
        super().__init__(message)
        self.estimate = estimate
        self.residual = residual


class SurjectivityError(NumericalError):
    """The operation needs ``A A^T`` to be invertible and it is not."""


class DivergenceError(NumericalError):
    """A non-finite value appeared; ``partial`` holds the last finite prefix."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InsufficientDataError(CompositeFlowError, ValueError):
    pass
