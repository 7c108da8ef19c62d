"""Modified and simplified exponential Runge-Kutta integrators.

Explicit time steppers for semi-linear systems y' = M y + f(y) whose
linear part is stiff or highly oscillatory, plus the classical
exponential-RK baselines, an embedded variable-stepsize controller, three
benchmark problems, and a CLI harness (``xrk``) for verification,
convergence and efficiency studies.
"""

from .errors import (
    BlowUpError,
    CapabilityError,
    ConfigurationError,
    DimensionError,
    DomainError,
    OracleError,
    UnsupportedError,
)
from .expkernels import ExpCache, expm, phi
from .integrators import (
    ALL_METHOD_IDS,
    BASELINE_METHOD_IDS,
    CORE_METHOD_IDS,
    FixedRunResult,
    MethodSpec,
    SemiLinearSystem,
    StepOutcome,
    WorkCounters,
    correction_term,
    integrate_fixed,
    method_spec,
    order_residuals,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_METHOD_IDS",
    "BASELINE_METHOD_IDS",
    "BlowUpError",
    "CORE_METHOD_IDS",
    "CapabilityError",
    "ConfigurationError",
    "DimensionError",
    "DomainError",
    "ExpCache",
    "FixedRunResult",
    "MethodSpec",
    "OracleError",
    "SemiLinearSystem",
    "StepOutcome",
    "UnsupportedError",
    "WorkCounters",
    "correction_term",
    "expm",
    "integrate_fixed",
    "method_spec",
    "order_residuals",
    "phi",
    "step",
]
