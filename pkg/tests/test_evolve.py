import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate
from scipy.special import comb

from conftest import random_density
from lindblad_galerkin.evolve import (
    DensityMatrix,
    PropagationError,
    SteadyStateMultiplicityWarning,
    _package,
    integrate,
    propagate,
    propagate_expm,
    steady_state,
)
from lindblad_galerkin.fock_ops import TruncationScheme
from lindblad_galerkin.lindblad import apply_lindbladian
from lindblad_galerkin.metrics import trace_norm
from lindblad_galerkin.models import cat_model, custom_model, qou_model

QOU = qou_model(1.0, 0.5)


def vacuum(d):
    rho = np.zeros((d, d), dtype=complex)
    rho[0, 0] = 1
    return rho


def number(rho):
    return float(np.sum(np.arange(rho.shape[0]) * np.diag(rho).real))


def test_integrator_scalar_exponential():
    out = integrate(lambda x: -x, np.ones((1, 1), dtype=complex), [0.0, 1.0, 3.0], rel_tol=1e-12,
                    symmetrize=False)
    assert out[0][0, 0] == 1
    assert out[1][0, 0] == pytest.approx(math.exp(-1), rel=1e-10)
    assert out[2][0, 0] == pytest.approx(math.exp(-3), rel=1e-10)


def test_integrator_matches_solve_ivp_on_rotation():
    gen = np.array([[0.0, 1.0], [-1.0, 0.0]])
    x0 = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=complex)
    ours = integrate(lambda x: gen @ x, x0, [0.0, 2.0], rel_tol=1e-11, symmetrize=False)[-1]
    ref = sp_integrate.solve_ivp(lambda t, y: (gen @ y.reshape(2, 2)).ravel(), (0, 2), x0.real.ravel(),
                                 rtol=1e-12, atol=1e-14, method="DOP853").y[:, -1]
    np.testing.assert_allclose(ours.real.ravel(), ref, atol=1e-9)


def test_qou_number_follows_moment_ode():
    space = QOU.model.scheme(40)
    res = propagate(QOU.model, space, vacuum(40), [0.0, 0.5, 1.0, 2.0])
    for t, rho in res.states:
        assert number(rho.matrix) == pytest.approx((1 - math.exp(-0.75 * t)) / 3, abs=1e-6)


def test_dopri_agrees_with_expm_multiply():
    spec = cat_model(1.0, 1.5, kappa1=0.1)
    space = spec.model.scheme(20)
    rho0 = DensityMatrix(random_density(np.random.default_rng(3), 20), space)
    a = propagate(spec.model, space, rho0, [0.0, 0.3, 1.0], rel_tol=1e-12)
    b = propagate_expm(spec.model, space, rho0, [0.0, 0.3, 1.0])
    for (_, x), (_, y) in zip(a.states, b.states):
        assert trace_norm(x.matrix - y.matrix) < 1e-9


def test_time_zero_returns_initial_matrix():
    space = QOU.model.scheme(10)
    rho0 = random_density(np.random.default_rng(0), 10)
    res = propagate(QOU.model, space, rho0, [0.0])
    np.testing.assert_array_equal(res.final().matrix, 0.5 * (rho0 + rho0.conj().T))
    assert res.times == [0.0]


def test_initial_state_is_compressed_from_larger_space():
    big = QOU.model.scheme(20)
    rho = DensityMatrix(random_density(np.random.default_rng(1), 20), big)
    res = propagate(QOU.model, QOU.model.scheme(8), rho, [0.0])
    np.testing.assert_array_equal(res.final().matrix, rho.matrix[:8, :8])


def test_pure_decay_populations_binomial():
    spec = custom_model("(0,0)*1", ["1*a0"])
    space = spec.model.scheme(8)
    rho0 = np.zeros((8, 8), dtype=complex)
    rho0[5, 5] = 1
    times = [0.0, 0.4, 1.5]
    res = propagate(spec.model, space, rho0, times, rel_tol=1e-12)
    for t, rho in res.states:
        q = math.exp(-t)
        want = [comb(5, m) * q**m * (1 - q) ** (5 - m) if m <= 5 else 0.0 for m in range(8)]
        np.testing.assert_allclose(rho.populations(), want, atol=1e-10)


def test_semigroup_property():
    spec = cat_model(1.0, 1.0, kappa1=0.2)
    space = spec.model.scheme(16)
    rho0 = random_density(np.random.default_rng(5), 16)
    full = propagate(spec.model, space, rho0, [0.7], rel_tol=1e-11).final().matrix
    half = propagate(spec.model, space, rho0, [0.3], rel_tol=1e-11).final()
    two = propagate(spec.model, space, half, [0.4], rel_tol=1e-11).final().matrix
    assert trace_norm(full - two) < 1e-9


@settings(max_examples=8)
@given(st.integers(0, 2**32 - 1))
def test_contraction_and_positivity(seed):
    rng = np.random.default_rng(seed)
    spec = cat_model(1.0, 1.5, kappa1=0.1, kappa1p=0.05)
    space = spec.model.scheme(12)
    r1, r2 = random_density(rng, 12), random_density(rng, 12)
    rel_tol = 1e-10
    a = propagate(spec.model, space, r1, [0.0, 0.5], rel_tol)
    b = propagate(spec.model, space, r2, [0.0, 0.5], rel_tol)
    assert trace_norm(a.final().matrix - b.final().matrix) <= trace_norm(r1 - r2) + 10 * rel_tol
    assert min(a.positivity_floor, b.positivity_floor) >= -10 * rel_tol
    assert a.trace_drift <= 10 * rel_tol * 0.5 + 1e-12


def test_cat_coherent_state_is_stationary():
    from lindblad_galerkin.convergence import InitialState, make_initial_state

    spec = cat_model(1.0, 2.0)
    space = spec.model.scheme(40)
    rho0 = make_initial_state(InitialState("coherent", alpha=2.0), space)
    res = propagate(spec.model, space, rho0, [0.25, 0.5, 1.0])
    for _, rho in res.states:
        assert trace_norm(rho.matrix - rho0.matrix) <= 1e-6


def test_trace_drift_guard():
    space = TruncationScheme.single(2)
    x0 = np.diag([1.0, 0.0]).astype(complex)
    bad = np.diag([1.1, 0.0]).astype(complex)
    with pytest.raises(PropagationError, match="drift"):
        _package(space, x0, [1.0], [bad], 1e-10)
    with pytest.raises(PropagationError, match="non-finite"):
        _package(space, x0, [1.0], [np.full((2, 2), np.nan)], 1e-10)


def test_density_matrix_validation():
    space = TruncationScheme.single(2)
    with pytest.raises(ValueError, match="Hermitian"):
        DensityMatrix(np.array([[1, 1], [0, 0]]), space)
    with pytest.raises(ValueError, match="positive"):
        DensityMatrix(np.diag([1.5, -0.5]), space)
    with pytest.raises(ValueError, match="trace"):
        DensityMatrix(np.diag([0.5, 0.4]), space)
    with pytest.raises(ValueError, match="shape"):
        DensityMatrix(np.eye(3) / 3, space)
    rho = DensityMatrix(np.diag([0.25, 0.75]), space)
    assert rho.trace == 1.0
    assert rho.expectation(np.diag([0, 1])) == pytest.approx(0.75)


def test_qou_steady_state_dense_and_sparse():
    for n, method in ((30, "dense"), (60, "sparse")):
        ss = steady_state(QOU.model, QOU.model.scheme(n), method)
        assert ss.multiplicity == 1
        assert number(ss.rho.matrix) == pytest.approx(1 / 3, abs=1e-8)
        assert ss.residual <= 1e-10
        # thermal state: geometric populations with ratio 1/4
        p = ss.rho.populations()
        np.testing.assert_allclose(p[1:10] / p[:9], 0.25, rtol=1e-6)


def test_pure_decay_steady_state_is_vacuum():
    spec = custom_model("(0,0)*1", ["1*a0"])
    ss = steady_state(spec.model, spec.model.scheme(10))
    np.testing.assert_allclose(ss.rho.matrix, vacuum(10), atol=1e-10)


def test_cat_steady_space_dimension_warns():
    spec = cat_model(1.0, 2.0)
    space = spec.model.scheme(30)
    with pytest.warns(SteadyStateMultiplicityWarning):
        ss = steady_state(spec.model, space, "dense")
    assert ss.multiplicity == 4
    assert ss.rho is None
    for m in ss.states:
        assert trace_norm(apply_lindbladian(spec.model, space, m), hermitian=False) < 1e-8


def test_unknown_steady_method():
    with pytest.raises(ValueError):
        steady_state(QOU.model, QOU.model.scheme(5), "magic")
