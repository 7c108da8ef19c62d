"""Embedded first/second-order pair with variable-stepsize control.

The local truncation error per unit step of the first-order scheme is
estimated from the difference against the embedded second-order scheme,
est = |y_high - y_low|_inf / h.  Control logic:

* est <= eps: accept, keep the same stepsize (capped by maxh);
* est >  eps: reject and retry with q h where q = eps / (2 est),
  clamped into [0.1 h, 2 h] and capped by maxh;
* the proposed stepsize falls below minih: stop early ("terminated").

The pair shares a single e^{hM} y product per attempt, so the estimate is
nearly free on top of the second-order step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BlowUpError, ConfigurationError
from .expkernels import ExpCache
from .integrators import SemiLinearSystem, WorkCounters

__all__ = [
    "ACCEPTED",
    "REJECTED",
    "TERMINATED",
    "AdaptiveResult",
    "ControllerConfig",
    "StepDecision",
    "TraceRow",
    "control",
    "embedded_step",
    "integrate_adaptive",
]

ACCEPTED = "accepted"
REJECTED = "rejected"
TERMINATED = "terminated"


@dataclass(frozen=True)
class ControllerConfig:
    eps: float
    h0: float
    maxh: float
    minih: float

    def __post_init__(self):
        if not (self.eps > 0):
            raise ConfigurationError("tolerance eps must be positive")
        if not (0 < self.minih <= self.h0 <= self.maxh):
            raise ConfigurationError("need 0 < minih <= h0 <= maxh")


@dataclass(frozen=True)
class StepDecision:
    verdict: str
    h_next: float
    estimate: float


@dataclass(frozen=True)
class TraceRow:
    t: float
    h: float
    est: float
    verdict: str
    h_next: float


@dataclass
class AdaptiveResult:
    times: np.ndarray
    states: np.ndarray
    trace: list
    accepts: int
    rejects: int
    cache_rebuilds: int
    terminated: bool
    work: WorkCounters


def embedded_step(
    sys: SemiLinearSystem,
    t: float,
    y: np.ndarray,
    h: float,
    cache: ExpCache,
    counters: Optional[WorkCounters] = None,
):
    """One fused attempt of the embedded pair from (t, y).

    Returns (y_low, y_high, est): the first-order update, the second-order
    update from the same state, and est = |y_high - y_low|_inf / h.  The
    single e^{hM} y product is computed once and reused by both updates.
    """
    if h <= 0:
        raise ConfigurationError("stepsize must be positive")
    if cache.h != float(h):
        raise ConfigurationError("cache was built for a different h")
    cnt = counters if counters is not None else WorkCounters()
    e1y = cache.exp(1) @ y
    cnt.buf[3] += 1
    f0 = sys.f(y)
    cnt.buf[0] += 1
    y_low = e1y + h * f0
    g0 = sys.M @ y + f0
    cnt.buf[2] += 1
    f1 = sys.f(y + h * g0)
    cnt.buf[0] += 1
    w2 = (h * h / 2.0) * (sys.M @ f0)
    cnt.buf[2] += 1
    y_high = e1y + (h / 2.0) * (f0 + f1) + w2
    if not (np.isfinite(y_low).all() and np.isfinite(y_high).all()):
        raise BlowUpError(t + h)
    est = float(np.max(np.abs(y_high - y_low))) / h
    return y_low, y_high, est


def control(est: float, h: float, cfg: ControllerConfig) -> StepDecision:
    """Accept/reject/terminate for one attempt with estimate est at h."""
    if est <= cfg.eps:
        return StepDecision(ACCEPTED, min(h, cfg.maxh), est)
    q = cfg.eps / (2.0 * est)
    if q <= 0.1:
        h_next = 0.1 * h
    elif q >= 2.0:
        h_next = 2.0 * h
    else:
        h_next = q * h
    h_next = min(h_next, cfg.maxh)
    if h_next < cfg.minih:
        return StepDecision(TERMINATED, h_next, est)
    return StepDecision(REJECTED, h_next, est)


def integrate_adaptive(
    sys: SemiLinearSystem,
    cfg: ControllerConfig,
    counters: Optional[WorkCounters] = None,
) -> AdaptiveResult:
    """Advance from t0 to tend under the controller.

    The final step is truncated to land exactly on tend (the truncated h
    gets its own transient cache).  The exponential cache is rebuilt
    whenever the attempted stepsize changes, and every rebuild is charged
    to the run's counters.
    """
    cnt = counters if counters is not None else WorkCounters()
    t = float(sys.t0)
    tend = float(sys.tend)
    y = sys.y0.copy()
    h = cfg.h0
    tiny = 1e-14 * max(1.0, abs(tend))
    times = [t]
    states = [y.copy()]
    trace: list = []
    accepts = rejects = rebuilds = 0
    terminated = False
    cache = None
    while t < tend - tiny:
        h_att = min(h, tend - t)
        if cache is None or cache.h != h_att:
            cache = ExpCache(sys.M, h_att, counters=cnt)
            rebuilds += 1
        y_low, y_high, est = embedded_step(sys, t, y, h_att, cache, cnt)
        dec = control(est, h_att, cfg)
        trace.append(TraceRow(t, h_att, est, dec.verdict, dec.h_next))
        if dec.verdict == ACCEPTED:
            t = t + h_att
            y = y_low
            accepts += 1
            times.append(t)
            states.append(y.copy())
        elif dec.verdict == REJECTED:
            rejects += 1
        else:
            terminated = True
            break
        h = dec.h_next
    return AdaptiveResult(
        times=np.array(times),
        states=np.array(states),
        trace=trace,
        accepts=accepts,
        rejects=rejects,
        cache_rebuilds=rebuilds,
        terminated=terminated,
        work=cnt,
    )
