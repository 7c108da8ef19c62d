"""Command-line harness: xrk {verify,convergence,efficiency,adaptive,list-methods}.

Exit status: 0 on success, 1 on verification failure, 2 on configuration
errors (bad flags, unknown methods, empty k-ranges, ...).
"""

from __future__ import annotations

import argparse
import sys as _sys

from . import bench
from .errors import ConfigurationError
from .integrators import ALL_METHOD_IDS, method_spec
from .kernels import backend_name

_PROBLEM_FLAGS = {"allen-cahn": "allen_cahn", "wind": "wind", "nls": "nls"}


def _parse_methods(text: str) -> tuple:
    if text.strip().lower() == "all":
        return ALL_METHOD_IDS
    ids = []
    for raw in text.split(","):
        mid = raw.strip().upper().replace("-", "_")
        if not mid:
            continue
        method_spec(mid)  # raises ConfigurationError for unknown ids
        ids.append(mid)
    if not ids:
        raise ConfigurationError("no methods given")
    return tuple(ids)


def _wind_overrides(args) -> dict:
    over = {}
    if getattr(args, "zeta", None) is not None:
        over["zeta"] = args.zeta
    if getattr(args, "lam", None) is not None:
        over["lam"] = args.lam
    if getattr(args, "y0", None) is not None:
        parts = [p for p in args.y0.split(",") if p.strip()]
        if len(parts) != 2:
            raise ConfigurationError("--y0 expects two comma-separated numbers")
        over["y0"] = (float(parts[0]), float(parts[1]))
    if over and args.problem != "wind":
        raise ConfigurationError("--zeta/--lambda/--y0 apply to the wind problem only")
    return over


def _add_study_flags(p, with_reps):
    p.add_argument("--problem", required=True, choices=sorted(_PROBLEM_FLAGS))
    p.add_argument("--methods", default="all", help="comma list of method ids, or 'all'")
    p.add_argument("--kmin", type=int, default=None, help="smallest k in h = 2^-k")
    p.add_argument("--kmax", type=int, default=None, help="largest k in h = 2^-k")
    if with_reps:
        p.add_argument("--reps", type=int, default=5, help="timing repetitions (median)")
    p.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    p.add_argument("--zeta", type=float, default=None, help="wind damping factor")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="wind detuning")
    p.add_argument("--y0", default=None, help="wind initial state, e.g. '0.5,0.5'")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="xrk",
        description="Benchmark harness for modified/simplified exponential RK integrators",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run the verification suites")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument(
        "--skip-orders",
        action="store_true",
        help="skip the (slower) empirical-order suite on the wind problem",
    )

    _add_study_flags(sub.add_parser("convergence", help="global error vs stepsize"), False)
    _add_study_flags(sub.add_parser("efficiency", help="global error vs CPU time"), True)

    a = sub.add_parser("adaptive", help="variable-stepsize demo of the embedded pair")
    a.add_argument("--problem", required=True, choices=sorted(_PROBLEM_FLAGS))
    a.add_argument("--eps", type=float, default=1e-4, help="local error-per-unit-step tolerance")
    a.add_argument("--h0", type=float, default=1e-2)
    a.add_argument("--maxh", type=float, default=0.5)
    a.add_argument("--minih", type=float, default=1e-8)
    a.add_argument("--out", default=None, help="trace CSV path (default: stdout)")
    a.add_argument("--zeta", type=float, default=None)
    a.add_argument("--lambda", dest="lam", type=float, default=None)
    a.add_argument("--y0", default=None)
    a.add_argument("--seed", type=int, default=0)

    sub.add_parser("list-methods", help="print the method catalog")
    return ap


def _emit(write_fn, payload, out):
    if out is None:
        write_fn(payload, _sys.stdout)
    else:
        write_fn(payload, out)
        print(f"wrote {out}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            report = bench.run_verify(seed=args.seed, include_orders=not args.skip_orders)
            print(f"stepping backend: {backend_name()}")
            for line in report.lines():
                print(line)
            n_fail = sum(not c.passed for c in report.checks)
            print(f"{len(report.checks) - n_fail}/{len(report.checks)} checks passed")
            return 0 if report.passed else 1

        if args.command in ("convergence", "efficiency"):
            plan = bench.plan_for(
                _PROBLEM_FLAGS[args.problem],
                methods=_parse_methods(args.methods),
                kmin=args.kmin,
                kmax=args.kmax,
                seed=args.seed,
                overrides=_wind_overrides(args),
                **({"reps": args.reps} if args.command == "efficiency" else {}),
            )
            runner = (
                bench.run_convergence if args.command == "convergence" else bench.run_efficiency
            )
            records = runner(plan)
            _emit(bench.write_convergence_csv, records, args.out)
            return 0

        if args.command == "adaptive":
            result, summary = bench.run_adaptive(
                _PROBLEM_FLAGS[args.problem],
                eps=args.eps,
                h0=args.h0,
                maxh=args.maxh,
                minih=args.minih,
                overrides=_wind_overrides(args),
            )
            _emit(bench.write_adaptive_csv, result, args.out)
            for key, val in summary.items():
                print(f"{key}: {val}")
            return 0

        if args.command == "list-methods":
            fam = {"mverk": "modified", "sverk": "simplified", "phi": "baseline"}
            print(f"{'id':<10} {'kind':<12} stages order correction    needs-jvp")
            for mid in ALL_METHOD_IDS:
                s = method_spec(mid)
                print(
                    f"{mid:<10} {fam[s.family]:<12} {s.stages:^6} {s.order:^5} "
                    f"{s.correction:<13} {'yes' if s.requires_jacobian else 'no'}"
                )
            return 0
    except ConfigurationError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
