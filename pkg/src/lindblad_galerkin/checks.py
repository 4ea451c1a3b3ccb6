"""Fast invariant suite behind ``lindblad-galerkin check``.

Each check returns ``CheckResult(name, passed, detail)``; randomized checks
draw from a generator seeded by the caller.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import apriori, convergence, fock_ops, lindblad, metrics
from .evolve import propagate
from .models import cat_buffer_model, cat_model, qou_model


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def random_state(rng: np.random.Generator, space, rank: int = 3, support=None) -> np.ndarray:
    """Random density matrix, optionally supported on the index set ``support``."""
    d = space.dim
    idx = np.arange(d) if support is None else np.asarray(support)
    g = rng.standard_normal((idx.size, rank)) + 1j * rng.standard_normal((idx.size, rank))
    rho = np.zeros((d, d), dtype=complex)
    rho[np.ix_(idx, idx)] = g @ g.conj().T
    rho /= np.trace(rho).real
    return 0.5 * (rho + rho.conj().T)


def _zoo():
    return [qou_model(1.0, 0.5), cat_model(1.0, 2.0, kappa1=0.1), cat_buffer_model(2.0, 1.0)]


def check_ccr() -> CheckResult:
    worst = 0.0
    for n in (5, 20, 100):
        space = fock_ops.TruncationScheme.single(n)
        p = fock_ops.parse_ncpoly("1*a0 ad0 + -1*ad0 a0")
        m = fock_ops.build_poly_operator(space, p).matrix
        worst = max(worst, float(np.abs(m - np.eye(space.dim)).max()))
    return CheckResult("commutator compression", worst <= 1e-12, f"max deviation {worst:.2e}")


def check_projector_decay() -> CheckResult:
    worst = 0.0
    for weights in ((1,), (fock_ops.Fraction(1, 2), 1)):
        space = fock_ops.TruncationScheme(weights, 60)
        for s1 in (0, 1, 2, 4):
            for s2 in (0, 1, 2, 4):
                if s2 >= s1:
                    ratios = metrics.projector_decay_check(space, s1, s2, range(5, 61))
                    worst = max(worst, max(r for _, r in ratios))
    return CheckResult("projector decay", worst <= 1 + 1e-12, f"max ratio {worst:.6f}")


def check_degrees() -> CheckResult:
    bad = [m.name for m in _zoo() if m.degree != max(m.d_hamiltonian, 2 * m.d_jump)]
    return CheckResult("model degree", not bad, "d = max(d_H, 2 d_j)" if not bad else f"mismatch {bad}")


def check_trace_and_duality(rng) -> CheckResult:
    worst_tr = worst_dual = 0.0
    for spec in _zoo():
        space = spec.model.scheme(8)
        rho = random_state(rng, space)
        x = rng.standard_normal((space.dim, space.dim)) + 1j * rng.standard_normal((space.dim, space.dim))
        x = x + x.conj().T
        gen = lindblad.galerkin_generator(spec.model, space)
        l_rho = gen.apply(rho)
        worst_tr = max(worst_tr, abs(np.trace(l_rho)))
        worst_dual = max(worst_dual, abs(np.trace(x @ l_rho) - np.trace(gen.adjoint(x) @ rho)))
    ok = worst_tr <= 1e-10 and worst_dual <= 1e-9
    return CheckResult("trace preservation and duality", ok, f"|tr L(rho)| {worst_tr:.1e}, duality {worst_dual:.1e}")


def check_superoperator(rng) -> CheckResult:
    worst = 0.0
    for spec in _zoo():
        space = spec.model.scheme(6)
        rho = random_state(rng, space)
        gen = lindblad.galerkin_generator(spec.model, space)
        s = gen.superoperator()
        worst = max(worst, float(np.abs(lindblad.unvec(s @ lindblad.vec(rho), space.dim) - gen.apply(rho)).max()))
    return CheckResult("superoperator consistency", worst <= 1e-10, f"max deviation {worst:.1e}")


def check_contraction(rng, rel_tol=1e-10) -> CheckResult:
    worst_gain = 0.0
    floor = np.inf
    for spec in _zoo()[:2]:
        space = spec.model.scheme(12)
        r1, r2 = random_state(rng, space), random_state(rng, space)
        res1 = propagate(spec.model, space, r1, [0.0, 0.5], rel_tol)
        res2 = propagate(spec.model, space, r2, [0.0, 0.5], rel_tol)
        before = metrics.trace_norm(r1 - r2)
        after = metrics.trace_norm(res1.final().matrix - res2.final().matrix)
        worst_gain = max(worst_gain, after - before)
        floor = min(floor, res1.positivity_floor, res2.positivity_floor)
    ok = worst_gain <= 10 * rel_tol and floor >= -10 * rel_tol
    return CheckResult("contraction and positivity", ok, f"norm gain {worst_gain:.1e}, min eig {floor:.1e}")


def check_moment_bounds(rng, samples: int = 50) -> CheckResult:
    worst = -np.inf
    for spec in _zoo()[:2]:
        space = spec.model.scheme(24)
        margin = apriori.default_margin(spec.model)
        inner = np.flatnonzero(space.levels <= 24 - margin)
        for k in (1, 2, 4):
            w = apriori.estimate_w(spec.model, space, k).w_k
            lam = fock_ops.lambda_diagonal(space, k)
            for _ in range(samples):
                rho = random_state(rng, space, support=inner)
                lhs = apriori.moment_derivative(spec.model, space, rho, k)
                worst = max(worst, lhs - w * float(np.sum(lam * np.diag(rho).real)))
    return CheckResult("moment estimate", worst <= 1e-8, f"max excess {worst:.1e}")


def check_stationary_states() -> CheckResult:
    cat = cat_model(1.0, 2.0)
    space = cat.model.scheme(40)
    rho = convergence.make_initial_state(convergence.InitialState("coherent", alpha=2.0), space).matrix
    r_cat = metrics.trace_norm(lindblad.apply_lindbladian(cat.model, space, rho), hermitian=True)
    buf = cat_buffer_model(2.0, 1.0)
    space2 = buf.model.scheme(12)
    rho2 = convergence.make_initial_state(
        (convergence.InitialState("coherent", alpha=2.0), convergence.InitialState("fock", n=0)), space2
    ).matrix
    r_buf = metrics.trace_norm(lindblad.apply_lindbladian(buf.model, space2, rho2), hermitian=True)
    ok = r_cat <= 1e-7 and r_buf <= 1e-6
    return CheckResult("documented stationary states", ok, f"cat {r_cat:.1e}, cat+buffer {r_buf:.1e}")


def check_initial_truncation() -> CheckResult:
    space = fock_ops.TruncationScheme.single(60)
    worst = -np.inf
    for spec in (convergence.InitialState("coherent", alpha=2.0), convergence.InitialState("thermal", nbar=1.0),
                 convergence.InitialState("algebraic_tail", k=4)):
        rho0 = convergence.make_initial_state(spec, space)
        for n in (5, 10, 20, 40):
            lhs, rhs = convergence.initial_truncation_bound(rho0, n)
            worst = max(worst, lhs - rhs)
    return CheckResult("initial truncation bound", worst <= 1e-14, f"max excess {worst:.1e}")


def run_all(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [
        check_ccr(),
        check_projector_decay(),
        check_degrees(),
        check_trace_and_duality(rng),
        check_superoperator(rng),
        check_contraction(rng),
        check_moment_bounds(rng),
        check_stationary_states(),
        check_initial_truncation(),
    ]
