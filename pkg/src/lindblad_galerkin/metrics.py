"""Trace norms, bosonic Sobolev norms and projector tail diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fock_ops import (
    FockOperator,
    TruncationScheme,
    _as_fraction,
    lambda_diagonal,
    operator_sobolev_norm,
    projector_diagonal,
)


def _is_hermitian(a: np.ndarray) -> bool:
    return np.array_equal(a, a.conj().T)


def trace_norm(a, hermitian: bool | None = None) -> float:
    """Sum of singular values.

    Exactly Hermitian input (including differences of symmetrized density
    matrices) takes the eigenvalue path; pass ``hermitian=True`` to force
    it for input that is Hermitian only up to rounding.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"trace norm needs a square matrix, got shape {a.shape}")
    if a.size == 0:
        return 0.0
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if hermitian is None:
        hermitian = _is_hermitian(a)
    if hermitian:
        herm = 0.5 * (a + a.conj().T)
        return float(np.sum(np.abs(np.linalg.eigvalsh(herm))))
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def sobolev_weighted(rho, space: TruncationScheme, k: float) -> np.ndarray:
    """``Lambda^{k/2} rho Lambda^{k/2}`` via row/column scaling."""
    w = lambda_diagonal(space, k / 2)
    return w[:, None] * np.asarray(rho) * w[None, :]


def sobolev_trace_norm(rho, space: TruncationScheme, k: float) -> float:
    """``||rho||_{W^{k,1}} = ||Lambda^{k/2} rho Lambda^{k/2}||_1``."""
    if k < 0:
        raise ValueError("Sobolev index must be nonnegative")
    rho = np.asarray(rho)
    return trace_norm(sobolev_weighted(rho, space, k), hermitian=_is_hermitian(rho))


def tail_mass(rho, space: TruncationScheme, cutoff) -> float:
    """``||P_{cutoff}^perp rho||_1``."""
    rows = projector_diagonal(space, cutoff) == 0
    if not rows.any():
        return 0.0
    # P^perp rho has the same singular values as its nonzero rows.
    return float(np.sum(np.linalg.svd(np.asarray(rho)[rows], compute_uv=False)))


def projector_decay_check(space: TruncationScheme, s1: float, s2: float, cutoffs):
    """Ratios ``||Lambda^{s1/2} P^perp Lambda^{-s2/2}|| * N'^{(s2-s1)/2}``.

    Every ratio is at most one; it is zero when nothing lies above the
    cutoff.  All three factors are diagonal, so the operator norm is the
    largest surviving diagonal weight.
    """
    if s1 > s2:
        raise ValueError(f"need s1 <= s2, got s1={s1}, s2={s2}")
    if s1 < 0:
        raise ValueError("Sobolev indices must be nonnegative")
    levels = np.asarray(space.levels)
    out = []
    for c in cutoffs:
        perp = 1.0 - projector_diagonal(space, c)
        weights = perp * levels ** ((s1 - s2) / 2)
        norm = float(weights.max(initial=0.0))
        out.append((c, norm * float(_as_fraction(c)) ** ((s2 - s1) / 2)))
    return out


def sandwich_bound_check(m0, m1, rho, space: TruncationScheme, s: float):
    """Both sides of ``||M0 rho M1^dag||_1 <= ||M0||_{H^s->H} ||rho||_{W^{s,1}} ||M1||_{H^s->H}``."""
    m0 = m0 if isinstance(m0, FockOperator) else FockOperator(m0, space)
    m1 = m1 if isinstance(m1, FockOperator) else FockOperator(m1, space)
    rho = np.asarray(rho)
    lhs = trace_norm(m0.matrix @ rho @ m1.matrix.conj().T, hermitian=False)
    rhs = (
        operator_sobolev_norm(m0, s, 0.0)
        * sobolev_trace_norm(rho, space, s)
        * operator_sobolev_norm(m1, s, 0.0)
    )
    return lhs, rhs


@dataclass
class NormReport:
    trace_norm: float
    sobolev_norms: dict[float, float] = field(default_factory=dict)
    tail: dict = field(default_factory=dict)

    def rows(self):
        """CSV rows ``(quantity, index, value)``."""
        yield ("trace_norm", "", self.trace_norm)
        for k in sorted(self.sobolev_norms):
            yield ("sobolev_norm", k, self.sobolev_norms[k])
        for c in sorted(self.tail):
            yield ("tail_mass", c, self.tail[c])


def norm_report(rho, space: TruncationScheme, ks=(), cutoffs=()) -> NormReport:
    return NormReport(
        trace_norm(rho),
        {k: sobolev_trace_norm(rho, space, k) for k in ks},
        {c: tail_mass(rho, space, c) for c in cutoffs},
    )


def min_eigenvalue(rho) -> float:
    rho = np.asarray(rho)
    if rho.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
