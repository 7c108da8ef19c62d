"""xrk-plot: render a harness CSV into one log-log figure."""

from __future__ import annotations

import argparse
import sys

from .figures import EmptyInputError, FigureSpec, SchemaError, render


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="xrk-plot",
        description="Plot xrk benchmark CSVs (accuracy: error vs h; efficiency: error vs CPU time)",
    )
    ap.add_argument("--csv", required=True, help="input CSV from the xrk harness")
    ap.add_argument("--kind", required=True, choices=["accuracy", "efficiency"])
    ap.add_argument("--problem", required=True, help="problem id filter, e.g. wind")
    ap.add_argument("--out", required=True, help="output image path (png/pdf/svg)")
    args = ap.parse_args(argv)
    try:
        result = render(FigureSpec(args.csv, args.kind, args.problem, args.out))
    except (SchemaError, EmptyInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.out_path} ({len(result.methods)} series)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
