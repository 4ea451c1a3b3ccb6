from fractions import Fraction

import numpy as np
import pytest

from lindblad_galerkin.convergence import InitialState, make_initial_state
from lindblad_galerkin.fock_ops import build_poly_operator, operator_sobolev_norm, parse_ncpoly
from lindblad_galerkin.lindblad import apply_lindbladian
from lindblad_galerkin.metrics import trace_norm
from lindblad_galerkin.models import (
    cat_buffer_model,
    cat_model,
    custom_model,
    model_from_params,
    qou_model,
)


def test_degrees_and_rates():
    q = qou_model(1.0, 0.5)
    assert (q.d_hamiltonian, q.d_jump, q.degree) == (0, 1, 2)
    assert q.rate_exponent(6) == 2.0 and q.predicted_slope(6) == -2.0
    c = cat_model(1.0, 2.0)
    assert (c.d_jump, c.degree) == (2, 4)
    b = cat_buffer_model(2.0, 1.0)
    assert (b.d_hamiltonian, b.d_jump, b.degree) == (3, 1, 3)
    assert b.model.mode_weights == (Fraction(1, 2), Fraction(1))
    for spec in (q, c, b):
        assert spec.degree == max(spec.d_hamiltonian, 2 * spec.d_jump)


@pytest.mark.parametrize(
    "factory, args",
    [
        (qou_model, (0.0, 1.0)),
        (qou_model, (1.0, -1.0)),
        (cat_model, (0.0, 1.0)),
        (cat_model, (1.0, -1.0)),
        (cat_model, (1.0, 1.0, -0.1)),
        (cat_buffer_model, (2.0, 0.0)),
    ],
)
def test_parameter_validation(factory, args):
    with pytest.raises(ValueError):
        factory(*args)


def test_cat_hamiltonian_hook():
    spec = cat_model(1.0, 2.0, hamiltonian=parse_ncpoly("0.5*ad0 a0 + 0.1*a0 a0 + 0.1*ad0 ad0"))
    assert spec.degree == 4
    with pytest.raises(ValueError, match="quadratic"):
        cat_model(1.0, 2.0, hamiltonian=parse_ncpoly("1*ad0 ad0 a0 a0"))


def test_qou_jump_amplitudes():
    spec = qou_model(2.0, 0.5)
    space = spec.model.scheme(4)
    mats = [build_poly_operator(space, j).matrix for j in spec.model.jumps]
    assert mats[0][0, 1] == pytest.approx(2.0)
    assert mats[1][1, 0] == pytest.approx(0.5)


def test_cat_coherent_state_stationary():
    spec = cat_model(1.0, 2.0)
    space = spec.model.scheme(40)
    rho = make_initial_state(InitialState("coherent", alpha=2.0), space).matrix
    assert trace_norm(apply_lindbladian(spec.model, space, rho)) <= 1e-7
    rho_m = make_initial_state(InitialState("coherent", alpha=-2.0), space).matrix
    assert trace_norm(apply_lindbladian(spec.model, space, rho_m)) <= 1e-7


def test_cat_buffer_stationary_and_hermitian():
    spec = cat_buffer_model(2.0, 1.0)
    space = spec.model.scheme(12)
    h = build_poly_operator(space, spec.model.hamiltonian).matrix
    assert np.abs(h - h.conj().T).max() <= 1e-10
    rho = make_initial_state((InitialState("coherent", alpha=2.0), InitialState("fock")), space).matrix
    assert trace_norm(apply_lindbladian(spec.model, space, rho)) <= 1e-6


def test_cat_buffer_operator_boundedness():
    spec = cat_buffer_model(2.0, 1.0)
    h_norms, b_norms, h_loose = [], [], []
    for n in (8, 12, 16, 24):
        space = spec.model.scheme(n)
        h = build_poly_operator(space, spec.model.hamiltonian)
        b = build_poly_operator(space, spec.model.jumps[0])
        h_norms.append(operator_sobolev_norm(h, 3, 0))
        b_norms.append(operator_sobolev_norm(b, 1, 0))
        h_loose.append(operator_sobolev_norm(h, 2, 0))
    assert max(h_norms) / min(h_norms) < 1.1
    assert max(b_norms) <= 1.0
    # with one order less smoothing the norm keeps growing
    assert h_loose[-1] > 1.3 * h_loose[0]


def test_model_from_params():
    assert model_from_params("qou", {"lambda": 1.0, "mu": 0.5}).model == qou_model(1.0, 0.5).model
    c = model_from_params("cat", {"kappa2": 1.0, "alpha": 2.0, "hamiltonian": "1*ad0 a0"})
    assert c.d_hamiltonian == 2
    cu = model_from_params("custom", {"hamiltonian": "1*ad0 a0", "jumps": ["1*a0"]})
    assert cu.degree == 2
    with pytest.raises(ValueError):
        model_from_params("duffing", {})


def test_custom_two_mode():
    spec = custom_model("1*ad0 a1 + 1*ad1 a0", ["0.5*a1"], mode_weights=(1, 1))
    assert spec.model.modes == 2 and spec.degree == 2
