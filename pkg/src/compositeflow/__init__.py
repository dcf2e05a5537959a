"""Linearized proximal ADMM for ``f(x) + h(Ax)``, its ODE/SDE limits and
numerical checks of the associated descent and rate statements."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CompositeFlowError,
    ConfigError,
    DivergenceError,
    InsufficientDataError,
    NumericalError,
    SurjectivityError,
    UsageError,
)
from .operators import LinearMap  # noqa: E402
from .problems import CompositeProblem, NoiseSpec, SmoothSum  # noqa: E402
from .regularizers import EnvelopeView, Regularizer  # noqa: E402
from .solvers import SolverParams, run  # noqa: E402

__all__ = [
    "CompositeFlowError", "CompositeProblem", "ConfigError", "DivergenceError", "EnvelopeView",
    "InsufficientDataError", "LinearMap", "NoiseSpec", "NumericalError", "Regularizer",
    "SmoothSum", "SolverParams", "SurjectivityError", "UsageError", "run",
]
