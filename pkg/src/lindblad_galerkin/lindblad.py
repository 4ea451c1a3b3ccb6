"""Lindbladians and their Galerkin truncations on Fock spaces.

Two finite-dimensional generators are built from a :class:`LindbladModel`:

* the *Galerkin* generator ``L_N``: every ``H`` and ``L_j`` is compressed,
  and the anticommutator uses ``L_{j,N}^dagger L_{j,N}``.  This is a genuine
  Lindbladian on the truncated space and is what gets propagated.
* the *reference* generator: ``H``, ``L_j`` and ``L_j^dagger L_j`` are each
  compressed exactly.  On states whose support stays ``d`` levels below the
  cutoff it coincides with the untruncated ``L``.

Superoperators use column-stacking vectorization,
``vec(A X B) = (B^T kron A) vec(X)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy import sparse

from .fock_ops import NCPoly, TruncationScheme, _as_fraction, build_poly_operator, transfer

VEC_CONVENTION = "column-stack"
HERMITICITY_TOL = 1e-10
# Dense superoperators above this many bytes are refused.
SUPEROPERATOR_BUDGET_BYTES = 1 << 30


class DimensionError(ValueError):
    pass


class BudgetExceeded(MemoryError):
    """Dense superoperator would not fit; use matrix-free propagation."""


@dataclass(frozen=True)
class LindbladModel:
    hamiltonian: NCPoly
    jumps: tuple[NCPoly, ...]
    mode_weights: tuple = (1,)
    name: str = "custom"
    check_level: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "jumps", tuple(self.jumps))
        weights = tuple(_as_fraction(w) for w in self.mode_weights)
        object.__setattr__(self, "mode_weights", weights)
        modes = len(weights)
        for p in (self.hamiltonian, *self.jumps):
            if p.modes != modes:
                raise ValueError(
                    f"{self.name}: polynomial has {p.modes} modes but {modes} mode weights were given"
                )
        # Self-adjointness at a desk truncation.
        level = self.check_level or (8 + self.degree)
        space = TruncationScheme(weights, level)
        h = build_poly_operator(space, self.hamiltonian).matrix
        err = np.max(np.abs(h - h.conj().T), initial=0.0)
        if err > HERMITICITY_TOL:
            raise ValueError(f"{self.name}: Hamiltonian is not self-adjoint (deviation {err:.3e})")

    @property
    def modes(self) -> int:
        return len(self.mode_weights)

    @property
    def d_hamiltonian(self) -> int:
        return self.hamiltonian.degree

    @property
    def d_jump(self) -> int:
        return max((j.degree for j in self.jumps), default=0)

    @property
    def degree(self) -> int:
        """``d = max(d_H, 2 d_j)``, the order of the generator."""
        return max(self.d_hamiltonian, 2 * self.d_jump)

    def scheme(self, level) -> TruncationScheme:
        return TruncationScheme(self.mode_weights, level)


@dataclass(frozen=True, eq=False)
class Generator:
    """Matrices defining a finite-dimensional Lindbladian.

    ``L(rho) = K rho + rho K^dagger + sum_j J_j rho J_j^dagger`` with
    ``K = -i H - 1/2 sum_j G_j``, where ``G_j`` is either
    ``J_j^dagger J_j`` (Galerkin) or the exact compression of
    ``L_j^dagger L_j`` (reference).
    """

    space: TruncationScheme
    hamiltonian: np.ndarray
    jumps: tuple[np.ndarray, ...]
    jump_products: tuple[np.ndarray, ...]
    truncated: bool

    @property
    def dim(self) -> int:
        return self.space.dim

    @cached_property
    def effective(self) -> np.ndarray:
        k = -1j * self.hamiltonian
        for g in self.jump_products:
            k = k - 0.5 * g
        k.flags.writeable = False
        return k

    def _check(self, x):
        x = np.asarray(x)
        if x.shape != (self.dim, self.dim):
            raise DimensionError(f"expected a {self.dim}x{self.dim} matrix, got shape {x.shape}")
        return x

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = self._check(rho)
        k = self.effective
        out = k @ rho
        out += rho @ k.conj().T
        for j in self.jumps:
            out += j @ rho @ j.conj().T
        return out

    def adjoint(self, x: np.ndarray) -> np.ndarray:
        """Trace-dual generator: ``tr(L(rho) X) = tr(rho L*(X))``."""
        x = self._check(x)
        k = self.effective
        out = k.conj().T @ x
        out += x @ k
        for j in self.jumps:
            out += j.conj().T @ x @ j
        return out

    def superoperator(self, budget_bytes: int | None = None, sparse_format: bool = False):
        d = self.dim
        budget = SUPEROPERATOR_BUDGET_BYTES if budget_bytes is None else budget_bytes
        if not sparse_format and 16 * d**4 > budget:
            raise BudgetExceeded(
                f"dense superoperator for D={d} needs {16 * d**4 / 2**20:.0f} MiB "
                f"(budget {budget / 2**20:.0f} MiB)"
            )
        eye = sparse.identity(d, dtype=complex, format="csr")
        k = sparse.csr_matrix(self.effective)
        s = sparse.kron(eye, k) + sparse.kron(k.conj(), eye)
        for j in self.jumps:
            js = sparse.csr_matrix(j)
            s = s + sparse.kron(js.conj(), js)
        s = s.tocsr()
        return s if sparse_format else s.toarray()


@lru_cache(maxsize=64)
def build_generator(model: LindbladModel, space: TruncationScheme, truncated: bool = True) -> Generator:
    if space.mode_weights != model.mode_weights:
        raise DimensionError("truncation scheme and model use different mode weights")
    h = build_poly_operator(space, model.hamiltonian).matrix
    jumps = tuple(build_poly_operator(space, j).matrix for j in model.jumps)
    if truncated:
        prods = tuple(_readonly(j.conj().T @ j) for j in jumps)
    else:
        prods = tuple(build_poly_operator(space, j.dagger() * j).matrix for j in model.jumps)
    return Generator(space, h, jumps, prods, truncated)


def _readonly(a):
    a.flags.writeable = False
    return a


def galerkin_generator(model: LindbladModel, space: TruncationScheme) -> Generator:
    return build_generator(model, space, True)


def reference_generator(model: LindbladModel, space: TruncationScheme) -> Generator:
    return build_generator(model, space, False)


def apply_lindbladian(model: LindbladModel, space: TruncationScheme, rho, truncated: bool = True):
    """Apply ``L_N`` (``truncated=True``) or the reference generator to ``rho``."""
    return build_generator(model, space, truncated).apply(rho)


def adjoint_apply(model: LindbladModel, space: TruncationScheme, x, truncated: bool = False):
    return build_generator(model, space, truncated).adjoint(x)


def build_superoperator(model: LindbladModel, space: TruncationScheme, truncated: bool = True,
                        budget_bytes: int | None = None, sparse_format: bool = False):
    return build_generator(model, space, truncated).superoperator(budget_bytes, sparse_format)


def exact_action(model: LindbladModel, space: TruncationScheme, rho):
    """Untruncated ``L(rho)`` for ``rho`` supported on ``space``.

    The result lives on ``space`` enlarged by ``d`` levels, where the
    reference generator is exact for any input supported on ``space``.

    Returns:
        (enlarged scheme, L(rho) as a matrix on it)
    """
    big = space.enlarged(model.degree)
    rho_big = transfer(rho, space, big)
    return big, reference_generator(model, big).apply(rho_big)


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape((d, d), order="F")


# -- superoperator dumps -----------------------------------------------------

_MAGIC = b"LSUPOP01"


def export_superoperator(path, s: np.ndarray) -> None:
    """Write a dense superoperator as row-major complex128 with a small header.

    Header: 8-byte magic, uint64 D (Hilbert dimension), 16-byte
    NUL-padded convention tag.
    """
    s = np.ascontiguousarray(np.asarray(s, dtype=np.complex128))
    n = s.shape[0]
    d = int(round(np.sqrt(n)))
    if s.shape != (n, n) or d * d != n:
        raise DimensionError(f"not a superoperator shape: {s.shape}")
    tag = VEC_CONVENTION.encode().ljust(16, b"\0")
    with open(Path(path), "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", d))
        fh.write(tag)
        fh.write(s.astype("<c16").tobytes(order="C"))


def load_superoperator(path) -> tuple[np.ndarray, str]:
    with open(Path(path), "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a superoperator dump")
        (d,) = struct.unpack("<Q", fh.read(8))
        tag = fh.read(16).rstrip(b"\0").decode()
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != d**4:
        raise ValueError(f"{path}: truncated payload ({data.size} of {d**4} entries)")
    return data.reshape(d * d, d * d).astype(np.complex128), tag
