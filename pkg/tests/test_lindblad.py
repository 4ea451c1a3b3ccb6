import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ladder, random_density
from lindblad_galerkin.fock_ops import NCPoly, TruncationScheme, parse_ncpoly
from lindblad_galerkin.lindblad import (
    BudgetExceeded,
    DimensionError,
    LindbladModel,
    adjoint_apply,
    apply_lindbladian,
    build_superoperator,
    exact_action,
    export_superoperator,
    galerkin_generator,
    load_superoperator,
    reference_generator,
    unvec,
    vec,
)
from lindblad_galerkin.models import cat_buffer_model, cat_model, qou_model


def textbook(h, jumps, rho):
    """-i[H, rho] + sum_j (L rho L^dag - 1/2 {L^dag L, rho})."""
    out = -1j * (h @ rho - rho @ h)
    for l in jumps:
        ld = l.conj().T
        out += l @ rho @ ld - 0.5 * (ld @ l @ rho + rho @ ld @ l)
    return out


def cat_matrices(n, alpha=2.0, kappa1=0.3, extra=0):
    a = ladder(n + extra)
    l2 = a @ a - alpha**2 * np.eye(n + extra)
    h = 0.7 * (a.conj().T @ a)
    return h, [l2, np.sqrt(kappa1) * a]


def test_galerkin_generator_matches_cropped_textbook_formula(rng):
    n = 9
    spec = cat_model(1.0, 2.0, kappa1=0.3, hamiltonian=parse_ncpoly("0.7*ad0 a0"))
    space = TruncationScheme.single(n)
    rho = random_density(rng, n)
    h, jumps = cat_matrices(n)
    np.testing.assert_allclose(apply_lindbladian(spec.model, space, rho), textbook(h, jumps, rho), atol=1e-11)


def test_reference_generator_is_compression_of_exact_generator(rng):
    n, extra = 9, 6
    spec = cat_model(1.0, 2.0, kappa1=0.3, hamiltonian=parse_ncpoly("0.7*ad0 a0"))
    space = TruncationScheme.single(n)
    rho = random_density(rng, n)
    # exact generator on a bigger space applied to the zero-padded state, then cropped
    h, jumps = cat_matrices(n, extra=extra)
    big = np.zeros((n + extra, n + extra), dtype=complex)
    big[:n, :n] = rho
    # the reference generator keeps -1/2{P L^dag L P, rho}, i.e. it drops
    # only the jump terms L rho L^dag that leave the space
    want = textbook(h, jumps, big)[:n, :n]
    np.testing.assert_allclose(apply_lindbladian(spec.model, space, rho, truncated=False), want, atol=1e-10)


def test_exact_action_matches_enlarged_textbook(rng):
    n = 8
    spec = cat_model(1.0, 2.0)
    space = TruncationScheme.single(n)
    rho = random_density(rng, n)
    big, l_rho = exact_action(spec.model, space, rho)
    assert big.dim == n + spec.degree
    m = big.dim + 4
    a = ladder(m)
    padded = np.zeros((m, m), dtype=complex)
    padded[:n, :n] = rho
    want = textbook(np.zeros((m, m)), [a @ a - 4 * np.eye(m)], padded)
    np.testing.assert_allclose(l_rho, want[: big.dim, : big.dim], atol=1e-10)
    assert np.abs(want[big.dim:]).max() < 1e-12


@pytest.mark.parametrize("spec", [qou_model(1.0, 0.5), cat_model(1.0, 2.0, kappa1=0.2), cat_buffer_model(2.0, 1.0)],
                         ids=lambda s: s.name)
@pytest.mark.parametrize("truncated", [True, False])
def test_trace_hermiticity_and_duality(spec, truncated, rng):
    space = spec.model.scheme(8)
    d = space.dim
    rho = random_density(rng, d)
    x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    l_rho = apply_lindbladian(spec.model, space, rho, truncated)
    np.testing.assert_allclose(l_rho, l_rho.conj().T, atol=1e-12)
    lhs = np.trace(x @ l_rho)
    rhs = np.trace(adjoint_apply(spec.model, space, x, truncated) @ rho)
    assert abs(lhs - rhs) < 1e-9
    if truncated:
        assert abs(np.trace(l_rho)) < 1e-11


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_generator_is_linear(seed, c1, c2):
    rng = np.random.default_rng(seed)
    spec = qou_model(1.0, 0.5)
    space = spec.model.scheme(6)
    r1, r2 = random_density(rng, 6), random_density(rng, 6)
    lhs = apply_lindbladian(spec.model, space, c1 * r1 + c2 * r2)
    rhs = c1 * apply_lindbladian(spec.model, space, r1) + c2 * apply_lindbladian(spec.model, space, r2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_vec_convention(rng):
    a, x, b = (rng.standard_normal((4, 4)) for _ in range(3))
    np.testing.assert_allclose(vec(a @ x @ b), np.kron(b.T, a) @ vec(x), atol=1e-12)
    np.testing.assert_array_equal(unvec(vec(x), 4), x)


@pytest.mark.parametrize("truncated", [True, False])
def test_superoperator_matches_apply(truncated, rng):
    spec = cat_buffer_model(2.0, 1.0)
    space = spec.model.scheme(5)
    d = space.dim
    rho = random_density(rng, d)
    s = build_superoperator(spec.model, space, truncated)
    assert s.shape == (d * d, d * d)
    np.testing.assert_allclose(unvec(s @ vec(rho), d), apply_lindbladian(spec.model, space, rho, truncated), atol=1e-12)
    sp = build_superoperator(spec.model, space, truncated, sparse_format=True)
    np.testing.assert_allclose(sp.toarray(), s)


def test_superoperator_budget():
    spec = qou_model(1.0, 0.5)
    with pytest.raises(BudgetExceeded):
        build_superoperator(spec.model, spec.model.scheme(20), budget_bytes=1000)


def test_superoperator_dump_roundtrip(tmp_path):
    spec = qou_model(1.0, 0.5)
    s = build_superoperator(spec.model, spec.model.scheme(4))
    path = tmp_path / "s.bin"
    export_superoperator(path, s)
    raw = path.read_bytes()
    assert raw[:8] == b"LSUPOP01"
    assert int.from_bytes(raw[8:16], "little") == 4
    assert raw[16:32].rstrip(b"\0") == b"column-stack"
    assert len(raw) == 32 + 16 * 4**4
    loaded, tag = load_superoperator(path)
    assert tag == "column-stack"
    np.testing.assert_array_equal(loaded, s)
    (tmp_path / "bad.bin").write_bytes(b"nonsense" * 4)
    with pytest.raises(ValueError):
        load_superoperator(tmp_path / "bad.bin")


def test_non_hermitian_hamiltonian_rejected():
    with pytest.raises(ValueError, match="self-adjoint"):
        LindbladModel(NCPoly.annihilator(), (), (1,))


def test_mode_count_mismatch():
    with pytest.raises(ValueError):
        LindbladModel(NCPoly.zero(2), (NCPoly.annihilator(),), (1, 1))


def test_dimension_errors(rng):
    spec = qou_model(1.0, 0.5)
    space = spec.model.scheme(5)
    with pytest.raises(DimensionError):
        apply_lindbladian(spec.model, space, np.eye(4))
    with pytest.raises(DimensionError):
        galerkin_generator(spec.model, TruncationScheme((1, 1), 4))


def test_generators_agree_on_deep_interior(rng):
    spec = cat_model(1.0, 2.0)
    space = spec.model.scheme(20)
    rho = np.zeros((20, 20), dtype=complex)
    rho[:12, :12] = random_density(rng, 12)
    np.testing.assert_allclose(
        galerkin_generator(spec.model, space).apply(rho), reference_generator(spec.model, space).apply(rho), atol=1e-12
    )
