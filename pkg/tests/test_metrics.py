import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import unitary_group

from conftest import random_density
from lindblad_galerkin.fock_ops import TruncationScheme, build_annihilation, build_creation
from lindblad_galerkin.metrics import (
    min_eigenvalue,
    norm_report,
    projector_decay_check,
    sandwich_bound_check,
    sobolev_trace_norm,
    tail_mass,
    trace_norm,
)

seeds = st.integers(0, 2**32 - 1)


def random_matrix(rng, d):
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


@given(seeds)
def test_trace_norm_matches_nuclear_norm(seed):
    rng = np.random.default_rng(seed)
    a = random_matrix(rng, 7)
    assert trace_norm(a) == pytest.approx(np.linalg.norm(a, "nuc"), rel=1e-12)
    h = a + a.conj().T
    assert trace_norm(h) == pytest.approx(np.linalg.norm(h, "nuc"), rel=1e-12)


@given(seeds)
def test_trace_norm_triangle_and_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    a, b = random_matrix(rng, 6), random_matrix(rng, 6)
    assert trace_norm(a + b) <= trace_norm(a) + trace_norm(b) + 1e-12
    u = unitary_group.rvs(6, random_state=rng)
    assert trace_norm(u @ a @ u.conj().T) == pytest.approx(trace_norm(a), rel=1e-10)


def test_trace_norm_of_state_is_one(rng):
    assert trace_norm(random_density(rng, 10)) == pytest.approx(1.0, abs=1e-13)
    assert trace_norm(np.zeros((0, 0))) == 0.0


def test_trace_norm_errors():
    with pytest.raises(ValueError):
        trace_norm(np.ones((2, 3)))
    with pytest.raises(ValueError):
        trace_norm(np.array([[np.nan]]))


def test_sobolev_norm_diagonal_direct_sum():
    space = TruncationScheme.single(30)
    p = np.exp(-0.3 * np.arange(30))
    p /= p.sum()
    for k in (0, 1, 2.5, 6):
        want = float(np.sum(p * (np.arange(30) + 1.0) ** k))
        assert sobolev_trace_norm(np.diag(p), space, k) == pytest.approx(want, rel=1e-12)


@given(seeds)
def test_sobolev_norm_monotone_in_k(seed):
    rng = np.random.default_rng(seed)
    space = TruncationScheme.single(8)
    rho = random_density(rng, 8)
    vals = [sobolev_trace_norm(rho, space, k) for k in (0, 1, 2, 4)]
    assert vals[0] == pytest.approx(1.0)
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_negative_sobolev_index_rejected():
    with pytest.raises(ValueError):
        sobolev_trace_norm(np.eye(2) / 2, TruncationScheme.single(2), -1)


def test_tail_mass(rng):
    space = TruncationScheme.single(10)
    p = np.linspace(1, 2, 10)
    p /= p.sum()
    assert tail_mass(np.diag(p), space, 6) == pytest.approx(p[6:].sum())
    assert tail_mass(np.diag(p), space, 10) == 0.0
    rho = random_density(rng, 10)
    assert tail_mass(rho, space, 4) == pytest.approx(np.linalg.norm(rho[4:], "nuc"))


@pytest.mark.parametrize("weights", [(1,), (0.5, 1)])
def test_projector_decay_ratios(weights):
    space = TruncationScheme(weights, 60)
    for s1 in (0, 1, 2, 4):
        for s2 in (s1, 4):
            ratios = projector_decay_check(space, s1, s2, range(5, 61))
            assert all(0 <= r <= 1 + 1e-12 for _, r in ratios)
    # equality is attained just above the cutoff on the single-mode lattice
    single = TruncationScheme.single(20)
    (_, r), = projector_decay_check(single, 0, 2, [10])
    assert r == pytest.approx(10 / 11)
    with pytest.raises(ValueError):
        projector_decay_check(space, 2, 1, [5])


@given(seeds, st.sampled_from([1.0, 2.0, 3.0]))
def test_sandwich_bound(seed, s):
    rng = np.random.default_rng(seed)
    space = TruncationScheme.single(12)
    rho = np.zeros((12, 12), dtype=complex)
    rho[:8, :8] = random_density(rng, 8)
    a, ad = build_annihilation(space), build_creation(space)
    lhs, rhs = sandwich_bound_check(a, ad @ a, rho, space, s)
    assert lhs <= rhs * (1 + 1e-12)


def test_norm_report_rows(rng):
    space = TruncationScheme.single(6)
    rho = random_density(rng, 6)
    rep = norm_report(rho, space, ks=(2, 1), cutoffs=(3,))
    rows = list(rep.rows())
    assert rows[0] == ("trace_norm", "", pytest.approx(1.0))
    assert [r[:2] for r in rows[1:]] == [("sobolev_norm", 1), ("sobolev_norm", 2), ("tail_mass", 3)]
    assert min_eigenvalue(rho) >= -1e-14
