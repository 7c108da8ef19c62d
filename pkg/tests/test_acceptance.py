"""Acceptance suite: one test (and one printed PASS/FAIL line) per criterion.

Run with `pytest tests/test_acceptance.py -s` to see the lines; each test
also enforces its criterion's stated tolerance and runtime budget.
"""

import math
import time

import numpy as np
import pytest

from xrk import (
    ALL_METHOD_IDS,
    CORE_METHOD_IDS,
    ExpCache,
    WorkCounters,
    expm,
    integrate_fixed,
    method_spec,
    order_residuals,
    phi,
    step,
)
from xrk import bench
from xrk.adaptive import ControllerConfig, integrate_adaptive
from xrk.bench import fit_slope, plan_for, run_convergence, usable_records
from xrk.integrators import SemiLinearSystem
from xrk.problems import WindConfig, build_wind, reference_solution


def _report(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def wind_records():
    t0 = time.perf_counter()
    recs = run_convergence(plan_for("wind"))
    return recs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def allen_cahn_records():
    t0 = time.perf_counter()
    recs = run_convergence(plan_for("allen_cahn"))
    return recs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def nls_records():
    t0 = time.perf_counter()
    recs = run_convergence(plan_for("nls"))
    return recs, time.perf_counter() - t0


def test_order_condition_exactness():
    t0 = time.perf_counter()
    worst = max(
        float(np.max(np.abs(order_residuals(method_spec(m))))) for m in CORE_METHOD_IDS
    )
    elapsed = time.perf_counter() - t0
    _report(
        "order-condition exactness (9 specs)",
        worst <= 1e-15 and elapsed < 1.0,
        f"max |residual| {worst:.2e} (tol 1e-15), {elapsed:.2f}s",
    )


def test_homogeneous_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    A = rng.standard_normal((6, 6))
    M = A - A.T
    y0 = rng.standard_normal(6)
    sys = SemiLinearSystem(
        M=M,
        f=lambda y: np.zeros_like(y),
        jvp=lambda y, v: np.zeros_like(v),
        y0=y0,
        t0=0.0,
        tend=5.0,
    )
    h, n = 0.05, 100
    worst = 0.0
    for mid in ALL_METHOD_IDS:
        cache = ExpCache(M, h)
        y = y0.copy()
        for i in range(1, n + 1):
            y = step(method_spec(mid), sys, (i - 1) * h, y, h, cache).y1
            worst = max(worst, float(np.max(np.abs(y - expm(i * h * M) @ y0))))
    elapsed = time.perf_counter() - t0
    _report(
        "homogeneous exactness (skew 6x6, f=0, 100 steps)",
        worst <= 1e-11 and elapsed < 5.0,
        f"max err {worst:.2e} (tol 1e-11), {elapsed:.2f}s",
    )


def test_a_stability_decay():
    # lambda = -50 embedded as a 2x2 real block, 200 steps at h = 0.1.  The
    # exact envelope e^{-1000} underflows doubles near step 142, so the
    # comparison runs on a per-step renormalized iteration whose magnitude
    # is accumulated in log space (identical per-step linear maps, kept in
    # the normal range); the literal comparison covers the pre-underflow
    # steps as well.
    t0 = time.perf_counter()
    lam, h, n = -50.0, 0.1, 200
    M = np.array([[lam, 0.0], [0.0, lam]])
    y0 = np.array([1.0, 0.0])
    sys = SemiLinearSystem(
        M=M,
        f=lambda y: np.zeros_like(y),
        jvp=lambda y, v: np.zeros_like(v),
        y0=y0,
        t0=0.0,
        tend=n * h,
    )
    slack = math.log1p(1e-12)
    worst = -math.inf
    ok_literal = True
    for mid in ALL_METHOD_IDS:
        cache = ExpCache(M, h)
        u = y0.copy()
        log_mag = 0.0
        y_lit = y0.copy()
        for i in range(1, n + 1):
            u = step(method_spec(mid), sys, (i - 1) * h, u, h, cache).y1
            mag = float(np.max(np.abs(u)))  # max norm: no squaring underflow
            log_mag += math.log(mag)
            u /= mag
            worst = max(worst, log_mag - (lam * i * h + slack))
            if i <= 140:  # e^{-700} is still a normal double
                y_lit = step(method_spec(mid), sys, (i - 1) * h, y_lit, h, cache).y1
                bound = math.exp(lam * i * h) * (1.0 + 1e-12)
                ok_literal = ok_literal and float(np.max(np.abs(y_lit))) <= bound
    elapsed = time.perf_counter() - t0
    _report(
        "A-stability (lambda=-50, 200 steps)",
        worst <= 0.0 and ok_literal and elapsed < 5.0,
        f"max log-excess over decay envelope {worst:.2e} (<= 0), "
        f"literal check {'ok' if ok_literal else 'failed'}, {elapsed:.2f}s",
    )


def test_classical_reduction():
    t0 = time.perf_counter()
    check = bench.check_classical_reduction(seed=42, tol=1e-14, n_states=50)
    elapsed = time.perf_counter() - t0
    _report(
        "classical reduction at M=0 (6 named schemes)",
        check.passed and elapsed < 5.0,
        f"{check.measured}, {elapsed:.2f}s",
    )


def test_wind_empirical_orders(wind_records):
    recs, elapsed = wind_records
    fails = []
    details = []
    for mid in ALL_METHOD_IDS:
        spec = method_spec(mid)
        mine = usable_records(recs, mid)
        if mine is None or len(mine) != 6:
            fails.append(f"{mid}: unusable cells")
            continue
        slope, _ = fit_slope([r.h for r in mine], [r.ge_max for r in mine])
        details.append(f"{mid} {slope:.2f}")
        if abs(slope - spec.order) > 0.25:
            fails.append(f"{mid}: slope {slope:.3f} vs {spec.order}")
    _report(
        "empirical orders, wind (k=3..8, tol 0.25)",
        not fails and elapsed < 30.0,
        ("; ".join(fails) if fails else " ".join(details)) + f", {elapsed:.1f}s",
    )


def test_pde_empirical_orders(allen_cahn_records, nls_records):
    fails = []
    excluded = []
    total_elapsed = 0.0
    for (recs, elapsed), label in ((allen_cahn_records, "allen_cahn"), (nls_records, "nls")):
        total_elapsed += elapsed
        for mid in ALL_METHOD_IDS:
            spec = method_spec(mid)
            all_cells = [r for r in recs if r.method == mid]
            mine = usable_records(recs, mid)
            if mine is None:
                fails.append(f"{label}/{mid}: non-converged interior cell")
                continue
            n_dropped = len(all_cells) - len(mine)
            if n_dropped:
                excluded.append(f"{label}/{mid}: {n_dropped} cell(s) at largest h")
            if len(mine) < 3:
                fails.append(f"{label}/{mid}: only {len(mine)} usable cells")
                continue
            slope, _ = fit_slope([r.h for r in mine], [r.ge_max for r in mine])
            if abs(slope - spec.order) > 0.3:
                ges = " ".join(f"{r.ge_max:.2e}" for r in mine)
                fails.append(f"{label}/{mid}: slope {slope:.3f} vs {spec.order} [GE: {ges}]")
    if excluded:
        print("  excluded blow-up cells: " + "; ".join(excluded))
    _report(
        "empirical orders, allen_cahn (k=8..13) + nls (k=2..7), tol 0.3",
        not fails and total_elapsed < 300.0,
        ("; ".join(fails) if fails else f"all slopes within 0.3")
        + f", {total_elapsed:.1f}s combined",
    )


def test_work_counters():
    sys = build_wind()
    h = 2.0**-4
    n = int(round(10.0 / h))
    measured = {}
    for mid in ALL_METHOD_IDS:
        cnt = WorkCounters()
        integrate_fixed(method_spec(mid), sys, h, counters=cnt)
        measured[mid] = (cnt.exp_builds, cnt.expmvs)
    ok = True
    notes = []
    for mid in ("MVERK1", "MVERK2_1", "MVERK2_2", "MVERK3_1", "MVERK3_2"):
        builds, prods = measured[mid]
        ok &= builds == 1 and prods == n  # exactly one e^{hM} y product per step
        notes.append(f"{mid} builds={builds} expmv/step={prods / n:g}")
    for mid in ("SVERK3_1", "SVERK3_2"):
        ok &= measured[mid][0] == 3
        notes.append(f"{mid} builds={measured[mid][0]}")
    ok &= measured["EEULER"][0] == 2
    notes.append(f"EEULER builds={measured['EEULER'][0]}")
    _report("work counters (fixed-step runs)", ok, "; ".join(notes))


def test_first_order_accuracy_parity(allen_cahn_records):
    recs, _ = allen_cahn_records
    h10 = 2.0**-10
    ge = {
        mid: next(r.ge_max for r in recs if r.method == mid and r.h == h10)
        for mid in ("MVERK1", "EEULER")
    }
    ratio = ge["MVERK1"] / ge["EEULER"]
    _report(
        "first-order accuracy parity on allen_cahn at k=10",
        0.5 <= ratio <= 2.0,
        f"GE(MVERK1)/GE(EEULER) = {ratio:.3f} (in [0.5, 2])",
    )


def test_adaptive_controller():
    t0 = time.perf_counter()
    eps = 1e-4
    cfg = ControllerConfig(eps=eps, h0=1e-2, maxh=0.5, minih=1e-8)
    sys = build_wind()
    res = integrate_adaptive(sys, cfg)
    ok = not res.terminated
    for row in res.trace:
        if row.verdict == "accepted":
            ok &= row.est <= eps
        else:
            ok &= 0.1 * row.h - 1e-300 <= row.h_next <= 2.0 * row.h
        ok &= row.h_next <= cfg.maxh
    ref = reference_solution("wind", WindConfig())
    ge = float(np.max(np.abs(res.states[-1] - ref)))
    ok &= ge <= 100 * eps
    elapsed = time.perf_counter() - t0
    _report(
        "adaptive controller (wind, eps=1e-4)",
        ok and elapsed < 10.0,
        f"accepts {res.accepts}, rejects {res.rejects}, GE {ge:.2e} "
        f"(<= {100 * eps:.0e}), {elapsed:.1f}s",
    )


def test_kernel_oracle_equivalence():
    def taylor_expm(A, terms=30):
        out = np.eye(A.shape[0])
        term = np.eye(A.shape[0])
        for k in range(1, terms + 1):
            term = term @ A / k
            out = out + term
        return out

    def phi_series(k, z, terms=40):
        return sum(z**m / math.factorial(m + k) for m in range(terms))

    rng = np.random.default_rng(2024)
    worst_e = 0.0
    for _ in range(20):
        A = rng.standard_normal((4, 4))
        A /= max(np.linalg.norm(A, 1), 1.0)
        worst_e = max(worst_e, float(np.max(np.abs(expm(A) - taylor_expm(A)))))
    worst_p = 0.0
    for k in (1, 2, 3):
        for z in (-2.0, -0.5, 0.0, 0.5, 2.0):
            worst_p = max(worst_p, abs(phi(k, [[z]])[0, 0] - phi_series(k, z)))
    _report(
        "kernel oracle equivalence (expm Taylor, phi series)",
        worst_e <= 1e-13 and worst_p <= 1e-13,
        f"expm gap {worst_e:.2e}, phi gap {worst_p:.2e} (tol 1e-13)",
    )
