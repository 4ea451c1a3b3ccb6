"""Galerkin convergence studies in trace norm.

The exact solution is replaced by the propagation at a reference level
``N_ref >= 2 max(N)``; each ``rho_(N)(t)`` is zero-padded into the
reference space before differencing.  How far the reference itself is
from the limit is estimated from the difference between the ``N_ref``
and ``N_ref/2`` propagations, extrapolated with the measured rate.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special, stats

from .evolve import DensityMatrix, propagate
from .fock_ops import TruncationScheme, embedding_indices, projector_diagonal, transfer
from .lindblad import LindbladModel, exact_action, galerkin_generator
from .metrics import sobolev_trace_norm, tail_mass, trace_norm
from .models import ModelSpec

logger = logging.getLogger(__name__)

ERROR_FLOOR = 1e-12
TAIL_LIMIT = 1e-6
STUDY_REL_TOL = 1e-13
PROXY_FRACTION = 0.01


class InitialStateError(ValueError):
    pass


class InsufficientData(ValueError):
    pass


# ---------------------------------------------------------------------------
# Initial states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialState:
    """Single-mode initial state.

    ``kind`` is one of ``coherent`` (``alpha``), ``thermal`` (``nbar``),
    ``algebraic_tail`` (``k``, ``eps``), ``fock`` (``n``) or ``custom``
    (``matrix`` on the target space).
    """

    kind: str
    alpha: complex = 0.0
    nbar: float = 0.0
    k: float = 0.0
    eps: float = 0.1
    n: int = 0
    matrix: np.ndarray | None = field(default=None, compare=False)

    def describe(self) -> str:
        if self.kind == "coherent":
            return f"coherent(alpha={self.alpha})"
        if self.kind == "thermal":
            return f"thermal(nbar={self.nbar})"
        if self.kind == "algebraic_tail":
            return f"algebraic_tail(k={self.k},eps={self.eps})"
        if self.kind == "fock":
            return f"fock(n={self.n})"
        return self.kind


KINDS = ("coherent", "thermal", "algebraic_tail", "fock", "custom")


def _factor(spec: InitialState, nmax: int):
    """Exact (unnormalized on the truncation) single-mode factor on ``0..nmax``.

    Returns ``("pure", amplitudes)`` or ``("diag", probabilities)``.
    """
    n = np.arange(nmax + 1)
    if spec.kind == "coherent":
        alpha = complex(spec.alpha)
        if alpha == 0:
            amp = (n == 0).astype(complex)
        else:
            logmag = -abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * special.gammaln(n + 1)
            amp = np.exp(logmag) * np.exp(1j * np.angle(alpha) * n)
        return "pure", amp
    if spec.kind == "thermal":
        nbar = float(spec.nbar)
        if nbar < 0:
            raise InitialStateError("thermal occupation must be nonnegative")
        if nbar == 0:
            return "diag", (n == 0).astype(float)
        q = nbar / (nbar + 1)
        return "diag", (1 - q) * q**n
    if spec.kind == "algebraic_tail":
        s = spec.k + 1 + spec.eps
        if s <= 1:
            raise InitialStateError("algebraic tail exponent must exceed 1")
        return "diag", (1.0 + n) ** (-s) / special.zeta(s, 1)
    if spec.kind == "fock":
        if spec.n < 0:
            raise InitialStateError("Fock index must be nonnegative")
        return "diag", (n == spec.n).astype(float)
    raise InitialStateError(f"unknown initial-state kind {spec.kind!r}; expected one of {KINDS}")


def make_initial_state(spec, space: TruncationScheme, tail_limit: float = TAIL_LIMIT) -> DensityMatrix:
    """Build a density matrix on ``space``, renormalized after truncation.

    ``spec`` is an :class:`InitialState` for one mode or a sequence of them
    (a product state) for several.  Raises if the probability mass the
    truncation discards exceeds ``tail_limit``.
    """
    if isinstance(spec, InitialState) and spec.kind == "custom":
        if spec.matrix is None:
            raise InitialStateError("custom initial state needs a matrix")
        return DensityMatrix(spec.matrix, space)
    specs = (spec,) if isinstance(spec, InitialState) else tuple(spec)
    if len(specs) != space.modes:
        raise InitialStateError(f"{len(specs)} mode factors given for a {space.modes}-mode space")
    occ = space.occupations
    rho = np.ones((space.dim, space.dim), dtype=complex)
    for m, sp in enumerate(specs):
        nmax = int(occ[:, m].max()) if len(occ) else 0
        kind, vals = _factor(sp, nmax)
        idx = occ[:, m]
        if kind == "pure":
            v = vals[idx]
            rho *= np.outer(v, v.conj())
        else:
            # diagonal in this mode only: p_n delta(n_i, n_j)
            rho *= np.where(idx[:, None] == idx[None, :], vals[idx][:, None], 0.0)
    kept = float(np.trace(rho).real)
    tail = 1.0 - kept
    if tail > tail_limit:
        raise InitialStateError(
            f"{', '.join(s.describe() for s in specs)} loses {tail:.2e} of its mass at level "
            f"{space.level} (limit {tail_limit:.0e})"
        )
    if kept <= 0:
        raise InitialStateError("initial state has no weight on the truncated space")
    rho /= kept
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, space)


def initial_truncation_bound(rho0: DensityMatrix, n: int):
    """Both sides of ``||rho0 - P_N rho0 P_N||_1 <= 2 ||P_N^perp rho0||_1``."""
    keep = projector_diagonal(rho0.space, n)
    m = rho0.matrix
    lhs = trace_norm(m - keep[:, None] * m * keep[None, :])
    return lhs, 2 * tail_mass(m, rho0.space, n)


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------


@dataclass
class StudyConfig:
    model: ModelSpec
    initial: object
    n_list: Sequence[int]
    n_ref: int
    times: Sequence[float]
    k_list: Sequence[float] = (0.0,)
    rel_tol: float = STUDY_REL_TOL
    threads: int = 1

    def __post_init__(self):
        self.n_list = [int(n) for n in self.n_list]
        self.times = [float(t) for t in self.times]
        self.k_list = [float(k) for k in self.k_list]
        problems = self.validate()
        if problems:
            raise ValueError("; ".join(problems))

    def validate(self) -> list[str]:
        problems = []
        if len(self.n_list) == 0:
            problems.append("n_list is empty")
        elif any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            problems.append("n_list must be strictly increasing")
        elif self.n_list[0] < 1:
            problems.append("truncation levels must be positive")
        elif self.n_ref < 2 * max(self.n_list):
            problems.append(
                f"n_ref={self.n_ref} violates the reference-dominance rule n_ref >= 2*max(n_list)"
                f" = {2 * max(self.n_list)}"
            )
        if not self.times:
            problems.append("times is empty")
        elif any(t < 0 for t in self.times) or any(b <= a for a, b in zip(self.times, self.times[1:])):
            problems.append("times must be nonnegative and strictly increasing")
        if not self.k_list:
            problems.append("k_list is empty")
        if not self.rel_tol > 0:
            problems.append("rel_tol must be positive")
        return problems


@dataclass
class Record:
    n: int
    t: float
    error: float
    error_over_t: float
    sobolev_norms: dict[float, float]


@dataclass
class RateFit:
    slope: float
    intercept: float
    stderr: float
    ns: list[int]


@dataclass
class ProxyEstimate:
    raw: float
    estimate: float
    exponent: float


@dataclass
class ConvergenceReport:
    model: str
    degree: int
    k_list: list[float]
    records: list[Record]
    fits: dict[float, RateFit | None]
    proxy: dict[float, ProxyEstimate]
    initial_truncation: dict[int, tuple[float, float]]
    reliable: bool = True
    warnings: list[str] = field(default_factory=list)
    trace_drift: float = 0.0
    positivity_floor: float = 0.0

    def predicted_slope(self, k: float) -> float:
        return -(k - self.degree) / 2

    def errors(self, t: float) -> dict[int, float]:
        return {r.n: r.error for r in self.records if r.t == t}

    @property
    def times(self) -> list[float]:
        return sorted({r.t for r in self.records})

    def rows(self):
        """Report rows with the documented CSV columns."""
        for k in self.k_list:
            for r in self.records:
                fit = self.fits.get(r.t)
                yield {
                    "model": self.model,
                    "k": k,
                    "d": self.degree,
                    "N": r.n,
                    "t": r.t,
                    "error": r.error,
                    "error_over_t": r.error_over_t,
                    "fitted_rate": fit.slope if fit else math.nan,
                    "predicted_rate": self.predicted_slope(k),
                    "proxy_error": self.proxy[r.t].estimate,
                }


CSV_COLUMNS = (
    "model", "k", "d", "N", "t", "error", "error_over_t", "fitted_rate", "predicted_rate", "proxy_error",
)


def fit_rate(ns, errors, floor: float = ERROR_FLOOR) -> RateFit:
    """Least-squares slope of ``log e_N`` against ``log N``.

    Points at or below ``floor`` are treated as saturated and dropped.
    """
    pts = [(n, e) for n, e in zip(ns, errors) if np.isfinite(e) and e > floor]
    if len(pts) < 3:
        raise InsufficientData(f"only {len(pts)} errors above the floor {floor:g}; need 3")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    res = stats.linregress(x, y)
    return RateFit(float(res.slope), float(res.intercept), float(res.stderr), [int(p[0]) for p in pts])


def fit_rates(report: ConvergenceReport, floor: float = ERROR_FLOOR) -> dict[float, RateFit | None]:
    out = {}
    for t in report.times:
        errs = report.errors(t)
        try:
            out[t] = fit_rate(list(errs), list(errs.values()), floor)
        except InsufficientData:
            out[t] = None
    return out


def _propagate_level(model: LindbladModel, rho0: DensityMatrix, level: int, times, rel_tol):
    space = TruncationScheme(model.mode_weights, level)
    res = propagate(model, space, rho0, times, rel_tol)
    return level, res


def run_study(cfg: StudyConfig) -> ConvergenceReport:
    model = cfg.model.model
    ref_space = model.scheme(cfg.n_ref)
    rho0 = make_initial_state(cfg.initial, ref_space)
    half = cfg.n_ref // 2
    levels = sorted(set(cfg.n_list) | {half, cfg.n_ref})

    def job(level):
        try:
            return _propagate_level(model, rho0, level, cfg.times, cfg.rel_tol)
        except Exception as exc:  # add context for the caller
            raise RuntimeError(f"{cfg.model.name}: propagation failed at N={level}: {exc}") from exc

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = dict(pool.map(job, levels))
    else:
        results = dict(job(lv) for lv in levels)

    padded = {
        lv: [transfer(rho.matrix, res.states[0][1].space, ref_space) for _, rho in res.states]
        for lv, res in results.items()
    }
    ref = padded[cfg.n_ref]
    records = []
    for i, t in enumerate(cfg.times):
        norms = {k: sobolev_trace_norm(ref[i], ref_space, k) for k in cfg.k_list}
        for n in cfg.n_list:
            err = trace_norm(padded[n][i] - ref[i])
            records.append(Record(n, t, err, err / t if t > 0 else math.nan, norms))
    records.sort(key=lambda r: (r.n, r.t))

    report = ConvergenceReport(
        cfg.model.name,
        model.degree,
        list(cfg.k_list),
        records,
        {},
        {},
        {n: initial_truncation_bound(rho0, n) for n in cfg.n_list},
    )
    report.fits = fit_rates(report)
    report.trace_drift = max(res.trace_drift for res in results.values())
    report.positivity_floor = min(res.positivity_floor for res in results.values())

    for i, t in enumerate(cfg.times):
        raw = trace_norm(ref[i] - padded[half][i])
        fit = report.fits[t]
        if fit is not None and fit.slope < 0:
            p = -fit.slope
        else:
            p = max(max(cfg.k_list) - model.degree, 0.0) / 2
        est = raw / (2.0**p - 1) if p > 0 else raw
        report.proxy[t] = ProxyEstimate(raw, est, p)
        measured = [e for e in report.errors(t).values() if e > ERROR_FLOOR]
        if measured and est >= PROXY_FRACTION * min(measured):
            report.reliable = False
            report.warnings.append(
                f"t={t:g}: reference proxy error {est:.3e} is not below "
                f"{PROXY_FRACTION:.0%} of the smallest measured error {min(measured):.3e}"
            )
    report.warnings.extend(monotonicity_flags(report))
    for w in report.warnings:
        logger.warning(w)
    return report


def monotonicity_flags(report: ConvergenceReport) -> list[str]:
    """Diagnostic only: ``e_N`` should not grow with ``N`` beyond the proxy error."""
    flags = []
    for t in report.times:
        errs = sorted(report.errors(t).items())
        slack = report.proxy[t].estimate if t in report.proxy else 0.0
        for (n1, e1), (n2, e2) in zip(errs, errs[1:]):
            if e2 > e1 + slack + ERROR_FLOOR:
                flags.append(f"t={t:g}: error grows from N={n1} ({e1:.3e}) to N={n2} ({e2:.3e})")
    return flags


# ---------------------------------------------------------------------------
# Generator residuals
# ---------------------------------------------------------------------------


def duhamel_residual(model: LindbladModel, space_big: TruncationScheme, rho, n: int) -> float:
    """``||(L - L_N)(rho)||_1`` for ``rho`` supported on ``space_big``.

    ``L(rho)`` is evaluated exactly on an enlarged space; ``L_N`` is the
    Galerkin generator at level ``n`` acting on the full ``rho``.
    """
    big, l_rho = exact_action(model, space_big, rho)
    rho_big = transfer(rho, space_big, big)
    gen = galerkin_generator(model, model.scheme(n))
    idx = embedding_indices(gen.space, big)
    sub = np.ix_(idx, idx)

    def embed(m):
        out = np.zeros((big.dim, big.dim), dtype=complex)
        out[sub] = m
        return out

    k = embed(gen.effective)
    ln_rho = k @ rho_big + rho_big @ k.conj().T
    for j in gen.jumps:
        jb = embed(j)
        ln_rho += jb @ rho_big @ jb.conj().T
    diff = l_rho - ln_rho
    return trace_norm(diff, hermitian=np.array_equal(rho_big, rho_big.conj().T) or None)


def duhamel_budget(model: LindbladModel, rho0: DensityMatrix, n: int, t: float, points: int = 21,
                   rel_tol: float = STUDY_REL_TOL) -> tuple[float, float]:
    """Measured ``e_N(t)`` and its Duhamel budget ``e_N(0) + int_0^t ||(L-L_N)(rho(s))||_1 ds``.

    ``rho(s)`` is the propagation on ``rho0``'s own (reference) space; the
    integral uses Simpson's rule on ``points`` equispaced nodes.
    """
    if points < 3 or points % 2 == 0:
        raise ValueError("Simpson's rule needs an odd number of at least 3 nodes")
    ref_space = rho0.space
    grid = np.linspace(0.0, t, points)
    ref = propagate(model, ref_space, rho0, grid, rel_tol)
    approx = propagate(model, model.scheme(n), rho0, [0.0, t], rel_tol)
    pad = lambda m: transfer(m, approx.states[0][1].space, ref_space)  # noqa: E731
    e0 = trace_norm(pad(approx.states[0][1].matrix) - rho0.matrix)
    et = trace_norm(pad(approx.states[1][1].matrix) - ref.states[-1][1].matrix)
    res = [duhamel_residual(model, ref_space, rho.matrix, n) for _, rho in ref.states]
    integral = float(_simpson(np.asarray(res), grid))
    return et, e0 + integral


def _simpson(y, x):
    h = (x[-1] - x[0]) / (len(x) - 1)
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())
