import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

import xrk.integrators as integrators
from xrk import ConfigurationError
from xrk import bench
from xrk.bench import (
    ADAPTIVE_CSV_HEADER,
    CSV_HEADER,
    ConvergenceRecord,
    fit_slope,
    plan_for,
    run_adaptive,
    run_convergence,
    run_efficiency,
    usable_records,
    write_convergence_csv,
)
from xrk.cli import main


def rec(method, h, ge):
    return ConvergenceRecord("wind", method, h, ge, 1, 1, 1, 1, 1)


# --- helpers -------------------------------------------------------------------


def test_fit_slope_recovers_power_law():
    hs = [2.0**-k for k in range(3, 9)]
    ges = [7.5 * h**2.5 for h in hs]
    slope, resid = fit_slope(hs, ges)
    assert slope == pytest.approx(2.5, abs=1e-12)
    assert resid <= 1e-12


def test_usable_records_drops_leading_blowups():
    rows = [rec("X", 0.25, math.inf), rec("X", 0.125, 2.0), rec("X", 0.0625, 0.01)]
    usable = usable_records(rows, "X")
    assert [r.h for r in usable] == [0.0625]


def test_usable_records_rejects_interior_blowup():
    rows = [rec("X", 0.25, 0.01), rec("X", 0.125, math.inf), rec("X", 0.0625, 0.001)]
    assert usable_records(rows, "X") is None


def test_plan_validation():
    with pytest.raises(ConfigurationError):
        plan_for("wind", kmin=8, kmax=3)
    with pytest.raises(ConfigurationError):
        plan_for("wind", methods=("NOPE",))
    with pytest.raises(ConfigurationError):
        plan_for("heat")
    plan = plan_for("nls")
    assert (plan.kmin, plan.kmax) == (2, 7)


# --- convergence -----------------------------------------------------------------


def test_convergence_rows_and_slope():
    plan = plan_for("wind", methods=("MVERK1", "MVERK2_1"))
    recs = run_convergence(plan)
    assert len(recs) == 2 * 6
    m1 = usable_records(recs, "MVERK1")
    slope, _ = fit_slope([r.h for r in m1], [r.ge_max for r in m1])
    assert abs(slope - 1.0) <= 0.25
    for r in recs:
        assert r.cpu_ns > 0
        assert r.n_steps == int(round(10.0 / r.h))
        assert r.n_exp_builds == 1


def test_convergence_counters_scale_with_steps():
    plan = plan_for("wind", methods=("SVERK3_1",), kmin=3, kmax=4)
    recs = run_convergence(plan)
    for r in recs:
        assert r.n_f_evals == 3 * r.n_steps
        # 4 plain matvecs + 3 cached products per step
        assert r.n_matvec == 7 * r.n_steps
        assert r.n_exp_builds == 3


def test_convergence_homogeneous_cells_hit_kernel_tolerance(monkeypatch):
    # f suppressed: every cell reproduces expm((tend-t0) M) y0 to 1e-11
    import xrk.problems as problems
    from xrk import expm
    from xrk.integrators import SemiLinearSystem

    wind = problems.build_wind()
    sys = SemiLinearSystem(
        M=wind.M,
        f=lambda y: np.zeros_like(y),
        jvp=lambda y, v: np.zeros_like(v),
        y0=wind.y0,
        t0=0.0,
        tend=10.0,
    )
    monkeypatch.setitem(problems._BUILDERS, "wind", lambda cfg: sys)
    ref = expm(10.0 * sys.M) @ sys.y0
    recs = run_convergence(plan_for("wind"), reference=ref)
    assert all(r.ge_max <= 1e-11 for r in recs)


def test_convergence_build_counts_mverk1_vs_eeuler():
    plan = plan_for("wind", methods=("MVERK1", "EEULER"), kmin=3, kmax=3)
    recs = run_convergence(plan)
    builds = {r.method: r.n_exp_builds for r in recs}
    assert builds == {"MVERK1": 1, "EEULER": 2}


def test_convergence_blowup_cell_is_sentinel_and_sweep_continues():
    from xrk.problems import reference_solution

    # the narrowed k-range would make the nominal h_ref too coarse to
    # certify, so reuse the reference of the standard grid
    plan = plan_for("allen_cahn", methods=("MVERK3_1",), kmin=5, kmax=8)
    recs = run_convergence(plan, reference=reference_solution("allen_cahn"))
    ges = {r.n_steps: r.ge_max for r in recs}
    assert math.isinf(ges[2**5])
    assert math.isfinite(ges[2**8])


def test_convergence_deterministic_but_for_timing():
    plan = plan_for("wind", methods=("MVERK2_2", "ERK2"), kmin=3, kmax=5)
    a = run_convergence(plan)
    b = run_convergence(plan)
    strip = lambda r: replace(r, cpu_ns=0)
    assert [strip(r).csv_row() for r in a] == [strip(r).csv_row() for r in b]


def test_csv_header_and_shape(tmp_path):
    plan = plan_for("wind", methods=("MVERK1",), kmin=3, kmax=4)
    recs = run_convergence(plan)
    out = tmp_path / "w.csv"
    write_convergence_csv(recs, str(out))
    lines = out.read_text().strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert lines[0] == "problem,method,h,ge_max,cpu_ns,n_steps,n_f_evals,n_matvec,n_exp_builds"
    assert len(lines) == 3
    assert lines[1].startswith("wind,MVERK1,0.125,")


# --- efficiency --------------------------------------------------------------------


def test_efficiency_requires_five_reps():
    with pytest.raises(ConfigurationError):
        run_efficiency(plan_for("wind", methods=("MVERK1",), reps=3))


def test_efficiency_median_of_reps(monkeypatch):
    class FakeTime:
        def __init__(self, reads):
            self.reads = iter(reads)

        def perf_counter_ns(self):
            return next(self.reads)

    from xrk.problems import reference_solution

    ref = reference_solution("wind")
    # warm-up duration 100 is discarded; rep durations 10,50,20,40,30
    reads = [0, 100, 100, 110, 110, 160, 160, 180, 180, 220, 220, 250]
    monkeypatch.setattr(bench, "time", FakeTime(reads))
    plan = plan_for("wind", methods=("MVERK1",), kmin=3, kmax=3, reps=5)
    recs = run_efficiency(plan, reference=ref)
    assert len(recs) == 1
    assert recs[0].cpu_ns == 30
    assert math.isfinite(recs[0].ge_max)


# --- verify ---------------------------------------------------------------------


def test_verify_passes_on_shipped_catalog():
    report = bench.run_verify(seed=0, include_orders=False)
    assert report.passed
    names = [c.name for c in report.checks]
    assert names == [
        "order-conditions",
        "homogeneous-exactness",
        "classical-reduction",
        "dahlquist-decay",
        "jvp-consistency",
    ]


def test_verify_negative_control(monkeypatch):
    F = Fraction
    good = integrators.method_spec("MVERK2_1")
    bad = replace(good, b=(F(1, 2) + F(1, 100), F(1, 2)))
    monkeypatch.setitem(integrators._CATALOG, "MVERK2_1", bad)
    check = bench.check_order_conditions()
    assert not check.passed
    assert "MVERK2_1" in check.measured


# --- adaptive demo ----------------------------------------------------------------


def test_run_adaptive_summary_and_trace_contracts():
    res, summary = run_adaptive("wind", eps=1e-3, h0=1e-2, maxh=0.5, minih=1e-8)
    assert summary["terminated"] is False
    assert summary["ge_max"] <= 100 * 1e-3
    assert summary["accepts"] == sum(r.verdict == "accepted" for r in res.trace)
    for row in res.trace:
        if row.verdict == "accepted":
            assert row.est <= 1e-3


# --- CLI ------------------------------------------------------------------------


def test_cli_list_methods(capsys):
    assert main(["list-methods"]) == 0
    out = capsys.readouterr().out
    assert "MVERK3_2" in out and "SVERK2_1" in out and "EEULER" in out


def test_cli_convergence_to_file(tmp_path, capsys):
    out = tmp_path / "wind.csv"
    code = main(
        [
            "convergence",
            "--problem",
            "wind",
            "--methods",
            "mverk1,sverk2-2",
            "--kmin",
            "3",
            "--kmax",
            "5",
            "--zeta",
            "0.3",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 2 * 3
    assert {l.split(",")[1] for l in lines[1:]} == {"MVERK1", "SVERK2_2"}


def test_cli_adaptive_stdout(capsys):
    code = main(["adaptive", "--problem", "wind", "--eps", "1e-3"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith(ADAPTIVE_CSV_HEADER)
    assert "accepts:" in out
    assert "terminated: False" in out


def test_cli_efficiency_smoke(tmp_path):
    out = tmp_path / "eff.csv"
    code = main(
        [
            "efficiency",
            "--problem",
            "wind",
            "--methods",
            "MVERK1,EEULER",
            "--kmin",
            "3",
            "--kmax",
            "4",
            "--reps",
            "5",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 5
    for ln in lines[1:]:
        assert int(ln.split(",")[4]) > 0  # cpu_ns populated


def test_cli_config_errors_exit_2(capsys):
    assert main(["convergence", "--problem", "wind", "--methods", "BOGUS"]) == 2
    assert main(["convergence", "--problem", "wind", "--kmin", "9", "--kmax", "3"]) == 2
    assert main(["convergence", "--problem", "nls", "--zeta", "0.5"]) == 2


def test_cli_verify_negative_exit_1(monkeypatch):
    F = Fraction
    good = integrators.method_spec("SVERK3_1")
    bad = replace(good, b=(F(2, 9), F(3, 9), F(5, 9)))
    monkeypatch.setitem(integrators._CATALOG, "SVERK3_1", bad)
    assert main(["verify", "--skip-orders"]) == 1
