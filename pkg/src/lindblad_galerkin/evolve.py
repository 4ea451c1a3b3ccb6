"""Propagation of the truncated Lindblad equation and steady states.

The default propagator is an adaptive Dormand-Prince 5(4) pair acting
directly on density matrices, symmetrized after every accepted step.  An
exponential-action propagator over the assembled superoperator is kept
alongside it as an independent cross-check for small spaces.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .fock_ops import TruncationScheme, transfer
from .lindblad import LindbladModel, galerkin_generator, unvec, vec
from .metrics import min_eigenvalue, trace_norm


DEFAULT_REL_TOL = 1e-10
# Rounding floor added to the trace-drift budget 10 * rel_tol * t.
TRACE_ROUNDOFF = 1e-12
DENSE_NULLSPACE_LIMIT = 2500
NULL_THRESHOLD = 1e-10


class PropagationError(RuntimeError):
    pass


class SteadyStateMultiplicityWarning(UserWarning):
    pass


@dataclass(eq=False)
class DensityMatrix:
    matrix: np.ndarray
    space: TruncationScheme
    herm_tol: float = 1e-10
    pos_tol: float = 1e-10
    trace_tol: float = 1e-10

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"matrix shape {m.shape} does not match space dimension {self.space.dim}")
        if not np.all(np.isfinite(m)):
            raise ValueError("density matrix has non-finite entries")
        herm = np.max(np.abs(m - m.conj().T), initial=0.0)
        if herm > self.herm_tol:
            raise ValueError(f"not Hermitian: deviation {herm:.3e} > {self.herm_tol:.1e}")
        low = min_eigenvalue(m)
        if low < -self.pos_tol:
            raise ValueError(f"not positive semidefinite: min eigenvalue {low:.3e}")
        tr = np.trace(m).real
        if abs(tr - 1) > self.trace_tol:
            raise ValueError(f"trace {tr!r} differs from 1 by more than {self.trace_tol:.1e}")
        m.flags.writeable = False
        self.matrix = m

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def expectation(self, op) -> complex:
        op = getattr(op, "matrix", op)
        return complex(np.trace(self.matrix @ op))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()


@dataclass
class PropagationResult:
    states: list[tuple[float, DensityMatrix]]
    trace_drift: float
    positivity_floor: float
    steps: int = 0
    rejected: int = 0

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.states]

    def final(self) -> DensityMatrix:
        return self.states[-1][1]

    def at(self, t: float) -> DensityMatrix:
        for s, rho in self.states:
            if s == t:
                return rho
        raise KeyError(t)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)
# ---------------------------------------------------------------------------

_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def _rms(x, scale):
    return float(np.sqrt(np.mean(np.abs(x / scale) ** 2))) if x.size else 0.0


@dataclass
class _Stats:
    steps: int = 0
    rejected: int = 0


def integrate(rhs, x0: np.ndarray, times, rel_tol=DEFAULT_REL_TOL, abs_tol=None,
              symmetrize: bool = True, max_steps: int = 10_000_000, stats: _Stats | None = None):
    """Integrate ``dx/dt = rhs(x)`` from ``t=0`` and return ``x`` at each time.

    ``rhs`` must be linear and autonomous (true for every generator here).
    Steps are clipped so that every requested time is hit exactly.
    """
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be nonnegative and strictly increasing")
    abs_tol = rel_tol * 1e-2 if abs_tol is None else abs_tol
    stats = stats if stats is not None else _Stats()
    x = np.array(x0, dtype=complex)
    if symmetrize:
        x = 0.5 * (x + x.conj().T)
    f = rhs(x)
    t = 0.0
    out = []
    h = None
    for target in times:
        while t < target:
            if h is None:
                h = _initial_step(rhs, x, f, rel_tol, abs_tol)
            step = min(h, target - t)
            last = step >= target - t
            ks = [f]
            for row in _A[1:6]:
                xi = x + step * sum(a * k for a, k in zip(row, ks) if a != 0.0)
                ks.append(rhs(xi))
            x_new = x + step * sum(b * k for b, k in zip(_A[6], ks) if b != 0.0)
            f_new = rhs(x_new)
            ks.append(f_new)
            err_vec = step * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
            scale = abs_tol + rel_tol * np.maximum(np.abs(x), np.abs(x_new))
            err = _rms(err_vec, scale)
            if not np.isfinite(err):
                raise PropagationError(f"non-finite values at t={t:.6g}")
            if err <= 1.0:
                t = target if last else t + step
                x = x_new
                if symmetrize:
                    x = 0.5 * (x + x.conj().T)
                    f = 0.5 * (f_new + f_new.conj().T)
                else:
                    f = f_new
                stats.steps += 1
                fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                if not last or step == h:
                    h = step * fac
            else:
                stats.rejected += 1
                h = step * max(0.2, 0.9 * err ** -0.2)
            if stats.steps + stats.rejected > max_steps:
                raise PropagationError(f"step budget exhausted at t={t:.6g}")
        out.append(x.copy())
    return out


def _initial_step(rhs, x, f, rel_tol, abs_tol):
    scale = abs_tol + rel_tol * np.abs(x)
    d0, d1 = _rms(x, scale), _rms(f, scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = rhs(x + h0 * f)
    d2 = _rms(f1 - f, scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def initial_matrix(space: TruncationScheme, rho0) -> np.ndarray:
    """Return ``P_N rho0 P_N`` as a matrix on ``space``.

    ``rho0`` is either a :class:`DensityMatrix` on any scheme with the same
    mode weights (compressed or zero-padded) or a bare matrix on ``space``.
    """
    if isinstance(rho0, DensityMatrix):
        return transfer(rho0.matrix, rho0.space, space)
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (space.dim, space.dim):
        raise ValueError(f"initial state has shape {rho0.shape}, space dimension is {space.dim}")
    return rho0


def propagate(model: LindbladModel, space: TruncationScheme, rho0, times,
              rel_tol: float = DEFAULT_REL_TOL, abs_tol: float | None = None) -> PropagationResult:
    """Approximate ``exp(t L_N)(P_N rho0 P_N)`` at each requested time.

    The trace is never renormalized; its drift must stay within
    ``10 * rel_tol * t`` (plus a rounding floor) or the run is rejected.
    """
    x0 = initial_matrix(space, rho0)
    x0 = 0.5 * (x0 + x0.conj().T)
    gen = galerkin_generator(model, space)
    stats = _Stats()
    mats = integrate(gen.apply, x0, times, rel_tol, abs_tol, stats=stats)
    return _package(space, x0, list(times), mats, rel_tol, stats)


def _package(space, x0, times, mats, rel_tol, stats=None):
    tr0 = np.trace(x0).real
    drift = 0.0
    floor = np.inf
    states = []
    for t, m in zip(times, mats):
        if not np.all(np.isfinite(m)):
            raise PropagationError(f"non-finite state at t={t}")
        d = abs(np.trace(m).real - tr0)
        bound = 10 * rel_tol * t + TRACE_ROUNDOFF
        if d > bound:
            raise PropagationError(f"trace drift {d:.3e} exceeds {bound:.3e} at t={t}")
        drift = max(drift, d)
        low = min_eigenvalue(m)
        floor = min(floor, low)
        states.append(
            (
                float(t),
                DensityMatrix(
                    m,
                    space,
                    herm_tol=1e-12,
                    pos_tol=max(10 * rel_tol, 1e-10),
                    trace_tol=abs(tr0 - 1) + bound,
                ),
            )
        )
    return PropagationResult(
        states,
        drift,
        float(floor) if states else 0.0,
        stats.steps if stats else 0,
        stats.rejected if stats else 0,
    )


def propagate_expm(model: LindbladModel, space: TruncationScheme, rho0, times,
                   rel_tol: float = DEFAULT_REL_TOL) -> PropagationResult:
    """Cross-check propagator: ``expm_multiply`` on the sparse superoperator."""
    x = vec(initial_matrix(space, rho0))
    d = space.dim
    s = galerkin_generator(model, space).superoperator(sparse_format=True)
    mats = []
    t_prev = 0.0
    for t in times:
        if t < t_prev:
            raise ValueError("times must be increasing")
        if t > t_prev:
            x = spla.expm_multiply(s * (t - t_prev), x)
        m = unvec(x, d)
        mats.append(0.5 * (m + m.conj().T))
        t_prev = t
    x0 = initial_matrix(space, rho0)
    return _package(space, 0.5 * (x0 + x0.conj().T), list(times), mats, rel_tol)


# ---------------------------------------------------------------------------
# Steady states
# ---------------------------------------------------------------------------


@dataclass
class SteadyState:
    """Null space of the truncated generator.

    ``basis`` holds an orthonormal basis of the null space in vectorized
    (column-stacked) form; ``states`` are the corresponding matrices.
    """

    space: TruncationScheme
    basis: np.ndarray
    singular_values: np.ndarray
    threshold: float
    residual: float = np.nan
    rho: DensityMatrix | None = None
    states: list = field(default_factory=list)

    @property
    def multiplicity(self) -> int:
        return self.basis.shape[1]

    def distance(self, rho) -> float:
        """Euclidean distance of ``vec(rho)`` from the null space."""
        v = vec(np.asarray(rho))
        proj = self.basis @ (self.basis.conj().T @ v)
        return float(np.linalg.norm(v - proj))


def steady_state(model: LindbladModel, space: TruncationScheme, method: str = "auto",
                 threshold: float = NULL_THRESHOLD) -> SteadyState:
    """Null space of ``L_N`` with a trace-one Hermitian steady state when unique.

    ``method="dense"`` uses a full SVD of the superoperator and counts
    singular values below ``threshold * sigma_max``.  ``"sparse"`` uses
    shift-invert eigenvalues of the sparse superoperator; ``"auto"`` picks
    dense up to ``D^2 = 2500``.
    """
    d = space.dim
    gen = galerkin_generator(model, space)
    if method == "auto":
        method = "dense" if d * d <= DENSE_NULLSPACE_LIMIT else "sparse"
    if method == "dense":
        s = gen.superoperator()
        _, sv, vh = np.linalg.svd(s)
        cut = threshold * sv[0] if sv.size else 0.0
        null = sv <= cut
        basis = vh[null].conj().T
        small = sv[::-1][: max(6, int(null.sum()) + 2)]
    elif method == "sparse":
        basis, small, cut = _sparse_null(gen.superoperator(sparse_format=True), threshold)
    else:
        raise ValueError(f"unknown method {method!r}")

    result = SteadyState(space, basis, np.asarray(small), cut)
    result.states = [unvec(basis[:, i], d) for i in range(basis.shape[1])]
    if result.multiplicity == 1:
        m = result.states[0]
        m = m / np.trace(m)
        m = 0.5 * (m + m.conj().T)
        result.residual = trace_norm(gen.apply(m), hermitian=False)
        result.rho = DensityMatrix(m, space, herm_tol=1e-12, pos_tol=1e-8, trace_tol=1e-10)
    else:
        warnings.warn(
            f"{model.name}: steady-state space has dimension {result.multiplicity} at level "
            f"{space.level}; returning the whole null space",
            SteadyStateMultiplicityWarning,
            stacklevel=2,
        )
        if result.multiplicity:
            result.residual = max(
                trace_norm(gen.apply(m), hermitian=False) / max(trace_norm(m, hermitian=False), 1e-300)
                for m in result.states
            )
    return result


def _sparse_null(s: sparse.csr_matrix, threshold: float, k: int = 6):
    n = s.shape[0]
    k = min(k, n - 2)
    sigma_max = spla.svds(s, k=1, return_singular_vectors=False)[0]
    cut = threshold * sigma_max
    # Small negative shift keeps the factorization nonsingular.
    shift = -1e-6 * sigma_max
    vals, vecs = spla.eigs(s, k=k, sigma=shift, which="LM")
    order = np.argsort(np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]
    null = np.abs(vals) <= cut
    basis, _ = np.linalg.qr(vecs[:, null]) if null.any() else (np.zeros((n, 0), complex), None)
    return basis, np.abs(vals), cut
