"""CSV writers.  Floats are printed with 17 significant digits so every
value round-trips exactly and reruns produce identical bytes."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .fock_ops import lambda_diagonal
from .metrics import min_eigenvalue


def fmt(value) -> str:
    if isinstance(value, bool) or value is None:
        return "" if value is None else str(value).lower()
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (complex, np.complexfloating)):
        return f"{value.real:.17g}{value.imag:+.17g}j"
    return str(value)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row[c] for c in columns]
            writer.writerow([fmt(v) for v in row])
    return path


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


def parse_observable(name: str):
    """``number``, ``moment:k`` or ``population:n`` -> (column, function of rho)."""
    kind, _, arg = name.partition(":")
    if kind == "number" and not arg:
        def f(rho):
            n = rho.space.occupations.sum(axis=1)
            return float(np.sum(n * np.diag(rho.matrix).real))
        return "number", f
    if kind == "moment" and arg:
        k = float(arg)

        def f(rho):
            return float(np.sum(lambda_diagonal(rho.space, k) * np.diag(rho.matrix).real))
        return f"moment_{arg}", f
    if kind == "population" and arg.isdigit():
        n = int(arg)

        def f(rho):
            return float(rho.matrix[n, n].real) if n < rho.space.dim else 0.0
        return f"population_{n}", f
    raise ValueError(f"unknown observable {name!r}; use number, moment:<k> or population:<n>")


def trajectory_rows(result, observables=()):
    parsed = [parse_observable(o) for o in observables]
    columns = ["time", "trace", "min_eig"] + [c for c, _ in parsed]
    rows = []
    for t, rho in result.states:
        rows.append([float(t), rho.trace, min_eigenvalue(rho.matrix)] + [f(rho) for _, f in parsed])
    return columns, rows


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------

APRIORI_COLUMNS = ("model", "k", "N", "w_k", "mu_k", "eta_k", "valid")


def apriori_rows(model_name: str, estimates):
    for e in estimates:
        yield [model_name, float(e.k), e.level, e.w_k,
               math.nan if e.mu_k is None else e.mu_k,
               math.nan if e.eta_k is None else e.eta_k, e.valid]


PLOT_COLUMNS = ("model", "t", "N", "log_N", "log_error")


def plot_rows(report):
    for r in sorted(report.records, key=lambda r: (r.t, r.n)):
        yield [report.model, r.t, r.n, math.log(r.n), math.log(r.error) if r.error > 0 else -math.inf]
