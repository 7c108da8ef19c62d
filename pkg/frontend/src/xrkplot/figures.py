"""Log-log accuracy and efficiency figures from xrk benchmark CSVs.

Consumes only the harness's CSV schema
(problem,method,h,ge_max,cpu_ns,n_steps,n_f_evals,n_matvec,n_exp_builds);
never mutates its input.  Accuracy figures plot ge_max against h with
order guide lines, efficiency figures plot ge_max against seconds of CPU
time.  Legend labels are exactly the method ids from the CSV; the fitted
log-log slopes are annotated in a separate box so the labels stay
round-trip identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

CSV_HEADER = "problem,method,h,ge_max,cpu_ns,n_steps,n_f_evals,n_matvec,n_exp_builds"

KINDS = ("accuracy", "efficiency")


class SchemaError(ValueError):
    """The CSV does not conform to the harness schema."""


class EmptyInputError(ValueError):
    """Nothing left to plot after filtering."""


@dataclass(frozen=True)
class FigureSpec:
    csv_path: str
    kind: str  # "accuracy" | "efficiency"
    problem: str
    out_path: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"kind must be one of {KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class Row:
    problem: str
    method: str
    h: float
    ge_max: float
    cpu_ns: int


@dataclass
class RenderResult:
    out_path: str
    methods: list
    slopes: dict
    dropped: list = field(default_factory=list)


def read_rows(path: str):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != CSV_HEADER:
        raise SchemaError(f"line 1: expected header {CSV_HEADER!r}")
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        parts = ln.split(",")
        if len(parts) != 9:
            raise SchemaError(f"line {lineno}: expected 9 fields, got {len(parts)}: {ln!r}")
        try:
            rows.append(
                Row(
                    problem=parts[0],
                    method=parts[1],
                    h=float(parts[2]),
                    ge_max=float(parts[3]),
                    cpu_ns=int(parts[4]),
                )
            )
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: {exc}: {ln!r}") from None
    return rows


def fit_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x) (the harness's fit)."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def render(spec: FigureSpec) -> RenderResult:
    """Write the figure and return what was drawn.

    Rows with non-finite ge_max are dropped with a console note; the
    remaining rows are grouped by method, keeping first-seen CSV order.
    """
    rows = [r for r in read_rows(spec.csv_path) if r.problem == spec.problem]
    dropped = [r for r in rows if not math.isfinite(r.ge_max)]
    for r in dropped:
        print(f"note: dropping non-finite cell {r.problem}/{r.method} at h={r.h!r}")
    rows = [r for r in rows if math.isfinite(r.ge_max)]
    if not rows:
        raise EmptyInputError(
            f"no finite rows for problem {spec.problem!r} in {spec.csv_path}"
        )

    methods = []
    for r in rows:
        if r.method not in methods:
            methods.append(r.method)

    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    slopes = {}
    for mid in methods:
        mine = sorted((r for r in rows if r.method == mid), key=lambda r: r.h)
        hs = [r.h for r in mine]
        ges = [r.ge_max for r in mine]
        xs = hs if spec.kind == "accuracy" else [r.cpu_ns / 1e9 for r in mine]
        slopes[mid] = fit_slope(hs, ges) if len(mine) >= 2 else float("nan")
        ax.loglog(xs, ges, marker="o", ms=4, lw=1.2, label=mid)

    if spec.kind == "accuracy":
        h_lo = min(r.h for r in rows)
        positive = [r.ge_max for r in rows if r.ge_max > 0]
        ge_lo = min(positive) if positive else 1e-16
        span = max(r.h for r in rows) / h_lo
        for p in (1, 2, 3):
            guide_h = np.array([h_lo, h_lo * span])
            ax.loglog(guide_h, ge_lo * (guide_h / h_lo) ** p, "--", lw=0.8,
                      color="0.6", zorder=0)
            ax.annotate(f"order {p}", (guide_h[-1], ge_lo * span**p),
                        fontsize=7, color="0.4", ha="right")
        ax.set_xlabel("stepsize h")
    else:
        ax.set_xlabel("CPU time (s)")
    ax.set_ylabel("global error (max norm)")
    ax.set_title(f"{spec.problem}: {spec.kind}")
    ax.legend(fontsize=7, loc="best")
    note = "fitted slopes:\n" + "\n".join(f"{m}: {slopes[m]:.2f}" for m in methods)
    ax.text(0.02, 0.02, note, transform=ax.transAxes, fontsize=6,
            va="bottom", family="monospace",
            bbox=dict(boxstyle="round", fc="white", ec="0.7", alpha=0.8))
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return RenderResult(out_path=spec.out_path, methods=methods, slopes=slopes,
                        dropped=dropped)
