"""Numerical probes of moment (a priori) estimates.

For ``X = Lambda^k`` the growth constant is the smallest ``w`` with
``L*(X) <= w X`` on the interior block, i.e. the top eigenvalue of
``X^{-1/2} L*(X) X^{-1/2}`` there.  The interior block stops
``edge_margin`` levels short of the cutoff, which is where the exact
compression of ``L*(X)`` agrees with the untruncated operator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .evolve import DEFAULT_REL_TOL, initial_matrix, propagate
from .fock_ops import TruncationScheme, _as_fraction, lambda_diagonal
from .lindblad import LindbladModel, exact_action, reference_generator
from .metrics import sobolev_trace_norm


@dataclass
class AprioriEstimate:
    k: float
    w_k: float
    edge_margin: float
    level: int
    mu_k: float | None = None
    eta_k: float | None = None
    valid: bool = True
    sweep: list[tuple[int, float]] = field(default_factory=list)

    @property
    def uniform_bound(self) -> float:
        """``mu_k / eta_k``, the level every moment eventually stays below."""
        if not self.eta_k:
            return math.inf
        return self.mu_k / self.eta_k


def moment_derivative(model: LindbladModel, space: TruncationScheme, rho, k: float) -> float:
    """``tr(L(rho) Lambda^k)`` for the untruncated generator.

    ``rho`` may use the whole of ``space``: the action is evaluated on a
    space enlarged by the model degree, so no edge margin is needed.
    """
    big, l_rho = exact_action(model, space, rho)
    return float(np.real(np.sum(np.diag(l_rho) * lambda_diagonal(big, k))))


def default_margin(model: LindbladModel) -> float:
    return model.degree * float(max(model.mode_weights))


def _interior_blocks(model: LindbladModel, space: TruncationScheme, k: float, margin: float):
    weights = lambda_diagonal(space, k)
    adj = reference_generator(model, space).adjoint(np.diag(weights).astype(complex))
    inner = np.flatnonzero(space.levels <= float(_as_fraction(space.level)) - margin + 1e-12)
    if inner.size == 0:
        raise ValueError(f"level {space.level} leaves no interior block with margin {margin}")
    a = adj[np.ix_(inner, inner)]
    a = 0.5 * (a + a.conj().T)
    return a, weights[inner]


def _check_margin(model, margin):
    need = default_margin(model)
    if margin < need:
        raise ValueError(f"edge margin {margin} is below the model degree bound {need}")


def growth_constant(model: LindbladModel, space: TruncationScheme, k: float,
                    edge_margin: float | None = None) -> float:
    margin = default_margin(model) if edge_margin is None else edge_margin
    _check_margin(model, margin)
    a, b = _interior_blocks(model, space, k, margin)
    s = 1 / np.sqrt(b)
    return float(np.linalg.eigvalsh(s[:, None] * a * s[None, :])[-1])


def estimate_w(model: LindbladModel, space: TruncationScheme, k: float,
               edge_margin: float | None = None, sweep_levels=None, tol: float = 1e-6) -> AprioriEstimate:
    """Smallest ``w`` with ``L*(Lambda^k) <= w Lambda^k`` on the interior block.

    The estimate is also computed at the coarser ``sweep_levels``
    (default: half the level); if refining the truncation raises ``w`` by
    more than ``tol * max(1, |w|)`` the estimate is marked invalid.
    """
    margin = default_margin(model) if edge_margin is None else edge_margin
    level = int(space.level)
    if sweep_levels is None:
        half = max(level // 2, int(math.ceil(margin)) + 2)
        sweep_levels = [half] if half < level else []
    sweep = []
    for lv in sorted(set(sweep_levels) | {level}):
        sweep.append((lv, growth_constant(model, space.with_level(lv), k, margin)))
    w = sweep[-1][1]
    valid = all(
        later - earlier <= tol * max(1.0, abs(later))
        for (_, earlier), (_, later) in zip(sweep, sweep[1:])
    )
    return AprioriEstimate(k, w, margin, level, valid=valid, sweep=sweep)


def estimate_mu_eta(model: LindbladModel, space: TruncationScheme, k: float,
                    edge_margin: float | None = None) -> tuple[float, float]:
    """Constants with ``tr(L(rho) Lambda^k) <= mu - eta tr(rho Lambda^k)`` for trace-one states.

    Among all admissible pairs the one minimizing ``mu/eta`` is returned.
    With ``u = 1/eta`` the ratio is ``lambda_max(u A + B)`` (``A`` the
    interior block of ``L*(Lambda^k)``, ``B`` that of ``Lambda^k``), which
    is convex in ``u``; it is minimized over ``log u``.  Returns
    ``(0, 0)`` when no positive ``eta`` exists on the block.
    """
    margin = default_margin(model) if edge_margin is None else edge_margin
    _check_margin(model, margin)
    a, b = _interior_blocks(model, space, k, margin)
    bmat = np.diag(b)

    def ratio(log_u):
        return float(np.linalg.eigvalsh(math.exp(log_u) * a + bmat)[-1])

    res = optimize.minimize_scalar(ratio, bounds=(-30.0, 30.0), method="bounded",
                                   options={"xatol": 1e-10})
    u = math.exp(res.x)
    bound = ratio(res.x)
    if not bound < b.max():
        return 0.0, 0.0
    eta = 1 / u
    mu = float(np.linalg.eigvalsh(a + eta * bmat)[-1])
    return mu, eta


def estimate(model: LindbladModel, space: TruncationScheme, k: float,
             edge_margin: float | None = None) -> AprioriEstimate:
    est = estimate_w(model, space, k, edge_margin)
    est.mu_k, est.eta_k = estimate_mu_eta(model, space, k, edge_margin)
    return est


def interpolated_w(k: float, k0: float, w0: float, k1: float, w1: float) -> float:
    """Chord between two grid estimates, the admissible constant at intermediate ``k``."""
    if not k0 <= k <= k1 or k0 == k1:
        raise ValueError("need k0 <= k <= k1 with k0 < k1")
    return ((k1 - k) * w0 + (k - k0) * w1) / (k1 - k0)


def semigroup_bound_check(model: LindbladModel, space: TruncationScheme, rho0, k: float, times,
                          w_k: float, rel_tol: float = DEFAULT_REL_TOL):
    """``(t, ||rho(t)||_{W^{k,1}} / (exp(w_k t) ||rho0||_{W^{k,1}}))`` along the truncated flow."""
    x0 = initial_matrix(space, rho0)
    norm0 = sobolev_trace_norm(x0, space, k)
    res = propagate(model, space, x0, times, rel_tol)
    return [
        (t, sobolev_trace_norm(rho.matrix, space, k) / (math.exp(w_k * t) * norm0))
        for t, rho in res.states
    ]


def uniform_bound_check(model: LindbladModel, space: TruncationScheme, rho0, k: float, times,
                        mu_k: float, eta_k: float, rel_tol: float = DEFAULT_REL_TOL):
    """``(t, ||rho(t)||_{W^{k,1}}, max(||rho0||_{W^{k,1}}, mu_k/eta_k))`` along the truncated flow."""
    x0 = initial_matrix(space, rho0)
    bound = max(sobolev_trace_norm(x0, space, k), mu_k / eta_k if eta_k > 0 else math.inf)
    res = propagate(model, space, x0, times, rel_tol)
    return [(t, sobolev_trace_norm(rho.matrix, space, k), bound) for t, rho in res.states]
