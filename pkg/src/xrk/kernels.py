"""Step-plan preparation and stepping-backend selection.

A StepPlan freezes everything a time loop needs for one (method, h, M)
cell: tableau floats, the cached exponential matrices, and -- for the
phi-weighted baselines -- the prepared weight matrices.  Plans are stored
on the ExpCache so repeated stepping never rebuilds a matrix function.

Two interchangeable executors exist: a compiled Cython core
(xrk._kernels_c) and a pure-numpy fallback (xrk._kernels_py).  The import
-time choice honours XRK_BACKEND in {auto, c, python}; both produce the
same work counters and states agreeing to roundoff, which is covered by
the parity test suite.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, ConfigurationError

FAMILY_MVERK = 0
FAMILY_SVERK = 1
FAMILY_PHI = 2

CORR_NONE = 0
CORR_W2 = 1  # (h^2/2) M f(y0); shared by the modified and simplified families
CORR_W3 = 2
CORR_W3T = 3

_CORR_CODE = {
    "none": CORR_NONE,
    "phi": CORR_NONE,
    "w2": CORR_W2,
    "w2_tilde": CORR_W2,
    "w3": CORR_W3,
    "w3_tilde": CORR_W3T,
}

_EMPTY_MATS = np.zeros((0, 1, 1))
_EMPTY_I64 = np.zeros(0, dtype=np.int64)
_EMPTY_F64 = np.zeros(0)


@dataclass
class StepPlan:
    family: int
    s: int
    a: np.ndarray  # (s, s) strictly lower triangular, float
    b: np.ndarray  # (s,)
    corr: int
    M: np.ndarray  # (d, d)
    E1: np.ndarray  # e^{hM}; for sverk this aliases exp_mats[upd_exp_idx]
    exp_mats: np.ndarray  # (m, d, d) stage exponentials (sverk) or all mats (phi)
    stage_exp_idx: np.ndarray  # (s,) int64, -1 = identity
    upd_exp_idx: int
    # flattened product groups (phi family): group g multiplies mats[grp_mat[g]]
    # with sum_k term_c[k] * f(Y_term_j[k]) and adds h * result to the target
    # stage (grp_target < s) or to the update (grp_target == s)
    grp_target: np.ndarray
    grp_mat: np.ndarray
    grp_len: np.ndarray
    term_j: np.ndarray
    term_c: np.ndarray


@dataclass
class SysData:
    f: object
    jvp: object
    kind: int  # 0 = call Python f/jvp; >0 = compiled nonlinearity
    params: np.ndarray


def sys_data(sys) -> SysData:
    sd = sys.__dict__.get("_sysdata")
    if sd is None:
        sd = SysData(
            f=sys.f,
            jvp=sys.jvp,
            kind=int(sys.nonlin_kind),
            params=np.ascontiguousarray(sys.nonlin_params, dtype=float),
        )
        sys.__dict__["_sysdata"] = sd
    return sd


def _mverk_plan(spec, sys, cache) -> StepPlan:
    return StepPlan(
        family=FAMILY_MVERK,
        s=spec.stages,
        a=np.ascontiguousarray(spec.a_float()),
        b=np.ascontiguousarray(spec.b_float()),
        corr=_CORR_CODE[spec.correction],
        M=cache.M,
        E1=cache.exp(1),
        exp_mats=_EMPTY_MATS,
        stage_exp_idx=_EMPTY_I64,
        upd_exp_idx=-1,
        grp_target=_EMPTY_I64,
        grp_mat=_EMPTY_I64,
        grp_len=_EMPTY_I64,
        term_j=_EMPTY_I64,
        term_c=_EMPTY_F64,
    )


def _sverk_plan(spec, sys, cache) -> StepPlan:
    nodes: list = []
    stage_idx = np.full(spec.stages, -1, dtype=np.int64)
    for i, ci in enumerate(spec.c):
        cf = float(ci)
        if cf == 0.0:
            continue
        if cf not in nodes:
            nodes.append(cf)
        stage_idx[i] = nodes.index(cf)
    if 1.0 not in nodes:
        nodes.append(1.0)
    upd_idx = nodes.index(1.0)
    mats = np.ascontiguousarray(np.stack([cache.exp(c) for c in nodes]))
    return StepPlan(
        family=FAMILY_SVERK,
        s=spec.stages,
        a=np.ascontiguousarray(spec.a_float()),
        b=np.ascontiguousarray(spec.b_float()),
        corr=_CORR_CODE[spec.correction],
        M=cache.M,
        E1=mats[upd_idx],
        exp_mats=mats,
        stage_exp_idx=stage_idx,
        upd_exp_idx=upd_idx,
        grp_target=_EMPTY_I64,
        grp_mat=_EMPTY_I64,
        grp_len=_EMPTY_I64,
        term_j=_EMPTY_I64,
        term_c=_EMPTY_F64,
    )


def _phi_plan(spec, sys, cache) -> StepPlan:
    # mats: list of product matrices; groups: (target, mat, [(j, coef)...])
    if spec.id == "EEULER":
        mats = [cache.exp(1), cache.phi(1, 1)]
        stage_idx = [-1]
        upd_idx = 0
        groups = [(1, 1, [(0, 1.0)])]
    elif spec.id == "ERK2":
        # second-order family at c2 = 1/2: Y2 = e^{hM/2} y + (h/2) phi1(hM/2) f0,
        # y1 = e^{hM} y + h ((phi1 - 2 phi2) f0 + 2 phi2 f(Y2))
        p1h = cache.phi(1, 0.5)
        p1 = cache.phi(1, 1)
        p2 = cache.phi(2, 1)
        mats = [cache.exp(0.5), 0.5 * p1h, cache.exp(1), p1 - 2.0 * p2, 2.0 * p2]
        stage_idx = [-1, 0]
        upd_idx = 2
        groups = [
            (1, 1, [(0, 1.0)]),
            (2, 3, [(0, 1.0)]),
            (2, 4, [(1, 1.0)]),
        ]
    elif spec.id == "ERK3":
        # three-stage third-order scheme of the ETD Runge-Kutta family:
        #   Y2 = e^{hM/2} y + (h/2) phi1(hM/2) f0
        #   Y3 = e^{hM} y + h phi1(hM) (2 f(Y2) - f0)
        #   y1 = e^{hM} y + h [(phi1 - 3 phi2 + 4 phi3) f0
        #                      + (4 phi2 - 8 phi3) f(Y2) + (-phi2 + 4 phi3) f(Y3)]
        p1h = cache.phi(1, 0.5)
        p1 = cache.phi(1, 1)
        p2 = cache.phi(2, 1)
        p3 = cache.phi(3, 1)
        mats = [
            cache.exp(0.5),
            0.5 * p1h,
            cache.exp(1),
            p1,
            p1 - 3.0 * p2 + 4.0 * p3,
            4.0 * p2 - 8.0 * p3,
            -p2 + 4.0 * p3,
        ]
        stage_idx = [-1, 0, 2]
        upd_idx = 2
        groups = [
            (1, 1, [(0, 1.0)]),
            (2, 3, [(0, -1.0), (1, 2.0)]),
            (3, 4, [(0, 1.0)]),
            (3, 5, [(1, 1.0)]),
            (3, 6, [(2, 1.0)]),
        ]
    else:
        raise ConfigurationError(f"no phi recipe for {spec.id!r}")
    grp_target = np.array([g[0] for g in groups], dtype=np.int64)
    grp_mat = np.array([g[1] for g in groups], dtype=np.int64)
    grp_len = np.array([len(g[2]) for g in groups], dtype=np.int64)
    term_j = np.array([j for g in groups for j, _ in g[2]], dtype=np.int64)
    term_c = np.array([c for g in groups for _, c in g[2]])
    mats = np.ascontiguousarray(np.stack(mats))
    return StepPlan(
        family=FAMILY_PHI,
        s=spec.stages,
        a=np.ascontiguousarray(spec.a_float()),
        b=np.ascontiguousarray(spec.b_float()),
        corr=CORR_NONE,
        M=cache.M,
        E1=mats[upd_idx],
        exp_mats=mats,
        stage_exp_idx=np.array(stage_idx, dtype=np.int64),
        upd_exp_idx=upd_idx,
        grp_target=grp_target,
        grp_mat=grp_mat,
        grp_len=grp_len,
        term_j=term_j,
        term_c=term_c,
    )


def plan_for(spec, sys, cache) -> StepPlan:
    """Build (or fetch) the step plan for spec on cache's (h, M)."""
    plan = cache.derived.get(spec.id)
    if plan is not None:
        return plan
    if spec.requires_jacobian and sys.jvp is None:
        raise CapabilityError(f"{spec.id} needs a Jacobian action (jvp)")
    if spec.family == "mverk":
        plan = _mverk_plan(spec, sys, cache)
    elif spec.family == "sverk":
        plan = _sverk_plan(spec, sys, cache)
    else:
        plan = _phi_plan(spec, sys, cache)
    cache.derived[spec.id] = plan
    return plan


_impl = None
_impl_name = None


def _load():
    global _impl, _impl_name
    if _impl is not None:
        return
    choice = os.environ.get("XRK_BACKEND", "auto").lower()
    if choice not in ("auto", "c", "python"):
        raise ConfigurationError(f"XRK_BACKEND must be auto|c|python, got {choice!r}")
    if choice in ("auto", "c"):
        try:
            from . import _kernels_c as impl

            _impl, _impl_name = impl, "c"
            return
        except ImportError:
            if choice == "c":
                raise
    from . import _kernels_py as impl

    _impl, _impl_name = impl, "python"


def backend_name() -> str:
    _load()
    return _impl_name


def get_backend(name: str):
    """Fetch a specific executor module ("c" or "python"); used by the
    parity tests and the backend benchmark."""
    if name == "python":
        from . import _kernels_py as impl
    elif name == "c":
        from . import _kernels_c as impl
    else:
        raise ConfigurationError(f"unknown backend {name!r}")
    return impl


def step_once(plan, sysd, t, y, h, cnt_buf):
    _load()
    return _impl.step_once(plan, sysd, t, y, h, cnt_buf)


def run_fixed(plan, sysd, t0, y0, h, n, cnt_buf):
    _load()
    return _impl.run_fixed(plan, sysd, t0, y0, h, n, cnt_buf)
