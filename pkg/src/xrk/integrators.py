"""Method catalog and single-step / fixed-step evaluators.

Two families of explicit exponential Runge-Kutta schemes are shipped:

* modified version ("mverk"): internal stages are those of a classical
  explicit RK method, Y_i = y0 + h * sum_j a_ij (M Y_j + f(Y_j)); the
  update applies e^{hM} once and adds a stage-count-dependent correction
  vector w_s built from M and the Jacobian action of f.

* simplified version ("sverk"): internal stages read Y_i = e^{c_i h M} y0
  + h * sum_j a_ij f(Y_j); all tableau coefficients stay plain scalars and
  the update adds the correction wt_s.

Both families integrate y' = M y exactly and reduce to the underlying
classical RK scheme as M -> 0.  Three classical exponential-RK baselines
(exponential Euler, a second- and a third-order phi-weighted scheme) are
included for comparison; their tableau entries here are the z -> 0 limits
of their matrix weights, the actual weights being phi-function matrices
prepared in xrk.kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .errors import (
    BlowUpError,
    CapabilityError,
    ConfigurationError,
    UnsupportedError,
)
from .expkernels import ExpCache

__all__ = [
    "ALL_METHOD_IDS",
    "BlowUpError",
    "CapabilityError",
    "ConfigurationError",
    "FixedRunResult",
    "MethodSpec",
    "SemiLinearSystem",
    "StepOutcome",
    "UnsupportedError",
    "WorkCounters",
    "correction_term",
    "integrate_fixed",
    "method_spec",
    "order_residuals",
    "step",
]


class WorkCounters:
    """Exact event counts for one integration run.

    buf holds [f evaluations, jvp calls, plain M matvecs, cached
    matrix-function matvecs]; exponential builds are charged by the
    ExpCache bound to the run.
    """

    __slots__ = ("buf", "exp_builds")

    def __init__(self):
        self.buf = np.zeros(4, dtype=np.int64)
        self.exp_builds = 0

    @property
    def f_evals(self) -> int:
        return int(self.buf[0])

    @property
    def jvp_calls(self) -> int:
        return int(self.buf[1])

    @property
    def matvecs(self) -> int:
        return int(self.buf[2])

    @property
    def expmvs(self) -> int:
        return int(self.buf[3])

    def asdict(self) -> dict:
        return {
            "f_evals": self.f_evals,
            "jvp_calls": self.jvp_calls,
            "matvecs": self.matvecs,
            "expmvs": self.expmvs,
            "exp_builds": self.exp_builds,
        }

    def __repr__(self):
        items = ", ".join(f"{k}={v}" for k, v in self.asdict().items())
        return f"WorkCounters({items})"


@dataclass
class SemiLinearSystem:
    """A semi-linear initial value problem y' = M y + f(y), y(t0) = y0.

    jvp(y, v) must return the Jacobian action f'(y) v; it is required by
    the third-order correction terms.  nonlin_kind/nonlin_params describe
    f to the compiled stepping kernel (0 means "call the Python f").
    """

    M: np.ndarray
    f: Callable[[np.ndarray], np.ndarray]
    jvp: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]]
    y0: np.ndarray
    t0: float
    tend: float
    name: str = ""
    nonlin_kind: int = 0
    nonlin_params: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.M = np.ascontiguousarray(self.M, dtype=float)
        self.y0 = np.ascontiguousarray(self.y0, dtype=float)
        if self.M.shape != (self.dim, self.dim):
            raise ConfigurationError("M must be square and match y0")

    @property
    def dim(self) -> int:
        return self.y0.shape[0]


@dataclass
class StepOutcome:
    """Result of one step: new state, optional embedded difference, work."""

    y1: np.ndarray
    err_estimate: Optional[np.ndarray]
    work: WorkCounters


@dataclass
class FixedRunResult:
    y: np.ndarray
    work: WorkCounters
    n_steps: int


@dataclass(frozen=True)
class MethodSpec:
    """Tableau and structural data for one scheme.

    a, b are exact rationals (the printed coefficients); c_i = sum_j a_ij.
    stage_pattern is "identity" for mverk stages and "exp" for sverk
    stages, which read e^{c_i h M} y0.  family "phi" marks the baselines
    whose weights are phi-function matrices.
    """

    id: str
    family: str  # "mverk" | "sverk" | "phi"
    stages: int
    a: tuple
    b: tuple
    correction: str  # "none" | "w2" | "w3" | "w2_tilde" | "w3_tilde" | "phi"
    order: int

    @property
    def c(self) -> tuple:
        return tuple(sum(row) for row in self.a)

    @property
    def requires_jacobian(self) -> bool:
        return self.correction in ("w3", "w3_tilde")

    @property
    def stage_pattern(self) -> tuple:
        if self.family == "mverk":
            return tuple("identity" for _ in range(self.stages))
        return tuple(
            "identity" if ci == 0 else f"exp({ci})" for ci in self.c
        )

    def a_float(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.a])

    def b_float(self) -> np.ndarray:
        return np.array([float(x) for x in self.b])


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


_CATALOG: dict = {}


def _define(mid, family, a, b, correction, order):
    s = len(b)
    a = tuple(tuple(_frac(x) for x in row) for row in a)
    b = tuple(_frac(x) for x in b)
    for i, row in enumerate(a):
        assert len(row) == s
        assert all(row[j] == 0 for j in range(i, s)), "explicit tableaux only"
    _CATALOG[mid] = MethodSpec(mid, family, s, a, b, correction, order)


F = Fraction

# one id for the one-stage scheme: the modified and simplified versions
# coincide there (e^{hM} y0 + h f(y0), the modified exponential Euler)
_define("MVERK1", "mverk", [[0]], [1], "none", 1)
_define("MVERK2_1", "mverk", [[0, 0], [1, 0]], [F(1, 2), F(1, 2)], "w2", 2)
_define("MVERK2_2", "mverk", [[0, 0], [F(1, 2), 0]], [0, 1], "w2", 2)
_define(
    "MVERK3_1",
    "mverk",
    [[0, 0, 0], [F(1, 3), 0, 0], [0, F(2, 3), 0]],
    [F(1, 4), 0, F(3, 4)],
    "w3",
    3,
)
_define(
    "MVERK3_2",
    "mverk",
    [[0, 0, 0], [F(1, 2), 0, 0], [0, F(3, 4), 0]],
    [F(2, 9), F(3, 9), F(4, 9)],
    "w3",
    3,
)
_define("SVERK2_1", "sverk", [[0, 0], [1, 0]], [F(1, 2), F(1, 2)], "w2_tilde", 2)
_define("SVERK2_2", "sverk", [[0, 0], [F(1, 2), 0]], [0, 1], "w2_tilde", 2)
_define(
    "SVERK3_1",
    "sverk",
    [[0, 0, 0], [F(1, 2), 0, 0], [0, F(3, 4), 0]],
    [F(2, 9), F(3, 9), F(4, 9)],
    "w3_tilde",
    3,
)
_define(
    "SVERK3_2",
    "sverk",
    [[0, 0, 0], [F(1, 3), 0, 0], [0, F(2, 3), 0]],
    [F(1, 4), 0, F(3, 4)],
    "w3_tilde",
    3,
)
# baselines; tableau entries are the z -> 0 limits of the phi weights
_define("EEULER", "phi", [[0]], [1], "phi", 1)
_define("ERK2", "phi", [[0, 0], [F(1, 2), 0]], [0, 1], "phi", 2)
_define(
    "ERK3",
    "phi",
    [[0, 0, 0], [F(1, 2), 0, 0], [-1, 2, 0]],
    [F(1, 6), F(2, 3), F(1, 6)],
    "phi",
    3,
)

ALL_METHOD_IDS = tuple(_CATALOG)
CORE_METHOD_IDS = tuple(m for m in _CATALOG if _CATALOG[m].family != "phi")
BASELINE_METHOD_IDS = tuple(m for m in _CATALOG if _CATALOG[m].family == "phi")


def method_spec(mid: str) -> MethodSpec:
    try:
        return _CATALOG[mid]
    except KeyError:
        raise ConfigurationError(f"unknown method id {mid!r}") from None


def order_residuals(spec: MethodSpec) -> np.ndarray:
    """Left-minus-right values of the order conditions for spec's order.

    Stage counts 1..3 are supported; the arithmetic is exact rational and
    converted to float only at the end, so a satisfied condition yields a
    residual of exactly 0.0.
    """
    s = spec.stages
    if s not in (1, 2, 3):
        raise UnsupportedError(f"order conditions shipped for s <= 3, got {s}")
    a = [[_frac(x) for x in row] for row in spec.a]
    b = [_frac(x) for x in spec.b]
    c = [sum(row) for row in a]
    res = [sum(b) - 1]
    if s == 2:
        res.append(2 * a[1][0] * b[1] - 1)
    elif s == 3:
        res.append(b[1] * c[1] + b[2] * c[2] - F(1, 2))
        res.append(b[1] * c[1] ** 2 + b[2] * c[2] ** 2 - F(1, 3))
        res.append(b[2] * a[2][1] * a[1][0] - F(1, 6))
    return np.array([float(r) for r in res])


def correction_term(
    correction: str,
    h: float,
    sys: SemiLinearSystem,
    y0: np.ndarray,
    counters: Optional[WorkCounters] = None,
) -> np.ndarray:
    """Evaluate a correction vector at the step's starting data.

    w2 = wt2 = (h^2/2) M f(y0); the third-order corrections additionally
    need the Jacobian action of f:

      w3  = (h^2/6) M (3 f0 + h (M f0 + f'(y0) g0)),          g0 = M y0 + f0
      wt3 = (h^2/2) M f0
            + (h^3/6) (M (M f0) + f'(y0) (M f0) + M f'(y0) g0)
    """
    cnt = counters if counters is not None else WorkCounters()
    M = sys.M
    y0 = np.asarray(y0, dtype=float)
    if correction == "none":
        return np.zeros_like(y0)
    if correction in ("w3", "w3_tilde") and sys.jvp is None:
        raise CapabilityError(f"correction {correction} needs a Jacobian action")
    f0 = sys.f(y0)
    cnt.buf[0] += 1
    if correction in ("w2", "w2_tilde"):
        cnt.buf[2] += 1
        return (h * h / 2.0) * (M @ f0)
    if correction == "w3":
        g0 = M @ y0 + f0
        u = M @ f0
        v = sys.jvp(y0, g0)
        cnt.buf[1] += 1
        cnt.buf[2] += 3
        return (h * h / 6.0) * (M @ (3.0 * f0 + h * (u + v)))
    if correction == "w3_tilde":
        u = M @ f0
        g0 = M @ y0 + f0
        w = (h * h / 2.0) * u + (h**3 / 6.0) * (
            M @ u + sys.jvp(y0, u) + M @ sys.jvp(y0, g0)
        )
        cnt.buf[1] += 2
        cnt.buf[2] += 4
        return w
    raise UnsupportedError(f"unknown correction id {correction!r}")


def _check_cache(cache: ExpCache, sys: SemiLinearSystem, h: float):
    if cache.h != float(h) or cache.M.shape != sys.M.shape:
        raise ConfigurationError("cache was built for a different (h, M)")


def step(
    spec: MethodSpec,
    sys: SemiLinearSystem,
    t: float,
    y: np.ndarray,
    h: float,
    cache: ExpCache,
    counters: Optional[WorkCounters] = None,
) -> StepOutcome:
    """Advance one step of length h > 0 from (t, y)."""
    from . import kernels

    if h <= 0:
        raise ConfigurationError("stepsize must be positive")
    _check_cache(cache, sys, h)
    cnt = counters if counters is not None else WorkCounters()
    plan = kernels.plan_for(spec, sys, cache)
    y1 = kernels.step_once(plan, kernels.sys_data(sys), t, np.asarray(y, float), h, cnt.buf)
    return StepOutcome(y1=y1, err_estimate=None, work=cnt)


def integrate_fixed(
    spec: MethodSpec,
    sys: SemiLinearSystem,
    h: float,
    cache: Optional[ExpCache] = None,
    counters: Optional[WorkCounters] = None,
) -> FixedRunResult:
    """Integrate from t0 to tend with a constant stepsize h.

    (tend - t0)/h must be an integer (to 1e-12); the exponential cache is
    created here if not supplied, so all builds are charged to this run.
    """
    from . import kernels

    if h <= 0:
        raise ConfigurationError("stepsize must be positive")
    span = sys.tend - sys.t0
    ratio = span / h
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-12 * max(1.0, abs(ratio)):
        raise ConfigurationError(
            f"(tend - t0)/h = {ratio!r} is not an integer step count"
        )
    cnt = counters if counters is not None else WorkCounters()
    if cache is None:
        cache = ExpCache(sys.M, h, counters=cnt)
    else:
        _check_cache(cache, sys, h)
    plan = kernels.plan_for(spec, sys, cache)
    y = kernels.run_fixed(plan, kernels.sys_data(sys), sys.t0, sys.y0, h, n, cnt.buf)
    return FixedRunResult(y=y, work=cnt, n_steps=n)
