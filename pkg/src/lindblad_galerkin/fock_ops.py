"""Operator algebra on truncated multi-mode Fock spaces.

The Galerkin space at level ``N`` is spanned by the Fock states
``|n_1, ..., n_M>`` whose reference-operator eigenvalue
``1 + sum_m w_m n_m`` does not exceed ``N``.  Polynomial operators are
compressed onto that space exactly: each word is applied to basis states
without any intermediate truncation, which is equivalent to building the
ladder operators on a space enlarged by ``degree * max(w)`` levels and
compressing the product afterwards.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np

# (mode index, dagger flag)
Letter = tuple[int, bool]
Word = tuple[Letter, ...]


def _as_fraction(w) -> Fraction:
    if isinstance(w, Fraction):
        return w
    if isinstance(w, float):
        return Fraction(w).limit_denominator(10**6)
    return Fraction(w)


# ---------------------------------------------------------------------------
# Non-commutative polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NCPoly:
    """Non-commutative polynomial in creation/annihilation letters.

    Words are stored in operator-product order: the word ``((0, False),
    (0, True))`` is ``a a^dagger`` and acts on a ket right-to-left.
    No normal ordering is performed, so two polynomials with different
    term lists may represent the same operator.
    """

    terms: tuple[tuple[complex, Word], ...]
    modes: int = 1

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("an NCPoly needs at least one mode")
        norm = []
        for coeff, word in self.terms:
            word = tuple((int(m), bool(d)) for m, d in word)
            for m, _ in word:
                if not 0 <= m < self.modes:
                    raise ValueError(f"letter acts on mode {m}, polynomial has {self.modes} modes")
            norm.append((complex(coeff), word))
        object.__setattr__(self, "terms", tuple(norm))

    # constructors -----------------------------------------------------------
    @classmethod
    def zero(cls, modes: int = 1) -> "NCPoly":
        return cls((), modes)

    @classmethod
    def scalar(cls, c: complex, modes: int = 1) -> "NCPoly":
        return cls(((complex(c), ()),), modes)

    @classmethod
    def annihilator(cls, mode: int = 0, modes: int = 1) -> "NCPoly":
        return cls(((1.0, ((mode, False),)),), modes)

    @classmethod
    def creator(cls, mode: int = 0, modes: int = 1) -> "NCPoly":
        return cls(((1.0, ((mode, True),)),), modes)

    # algebra ----------------------------------------------------------------
    def _check(self, other: "NCPoly"):
        if self.modes != other.modes:
            raise ValueError(f"mode count mismatch: {self.modes} vs {other.modes}")

    def __add__(self, other):
        if not isinstance(other, NCPoly):
            other = NCPoly.scalar(other, self.modes)
        self._check(other)
        return NCPoly(self.terms + other.terms, self.modes)

    __radd__ = __add__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        if not isinstance(other, NCPoly):
            other = NCPoly.scalar(other, self.modes)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, NCPoly):
            self._check(other)
            terms = tuple(
                (c1 * c2, w1 + w2) for c1, w1 in self.terms for c2, w2 in other.terms
            )
            return NCPoly(terms, self.modes)
        c = complex(other)
        return NCPoly(tuple((c * coeff, w) for coeff, w in self.terms), self.modes)

    def __rmul__(self, other):
        # scalars only; NCPoly * NCPoly goes through __mul__
        return self * other

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative powers are not polynomials")
        out = NCPoly.scalar(1.0, self.modes)
        for _ in range(n):
            out = out * self
        return out

    def dagger(self) -> "NCPoly":
        """Formal adjoint: reverse each word, swap dagger flags, conjugate."""
        terms = tuple(
            (c.conjugate(), tuple((m, not d) for m, d in reversed(w))) for c, w in self.terms
        )
        return NCPoly(terms, self.modes)

    @property
    def degree(self) -> int:
        return max((len(w) for c, w in self.terms if c != 0), default=0)

    def __str__(self):
        return format_ncpoly(self)


# ---------------------------------------------------------------------------
# Text grammar
# ---------------------------------------------------------------------------

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_COEFF_RE = re.compile(rf"\s*(\(\s*{_NUM}\s*,\s*{_NUM}\s*\)|{_NUM})\s*\*")
_WORD_RE = re.compile(r"\s*([^+]*)")
_LETTER_RE = re.compile(r"^(a|ad)(\d+)$")


class NCPolyParseError(ValueError):
    pass


def parse_ncpoly(text: str, modes: int | None = None) -> NCPoly:
    """Parse the config grammar, e.g. ``"1*a0 a0 + (-4,0)*1"`` for ``a^2 - 4``.

    Letters ``aK`` / ``adK`` annihilate / create in mode ``K`` and are
    juxtaposed in operator-product order.  The empty word is written ``1``.
    If ``modes`` is None it is inferred from the largest mode index used.
    """
    if not text.strip():
        raise NCPolyParseError("empty polynomial")
    terms = []
    pos = 0
    max_mode = -1
    while True:
        m = _COEFF_RE.match(text, pos)
        if m is None:
            raise NCPolyParseError(f"expected 'coeff*word' at offset {pos}: {text[pos:]!r}")
        raw = m.group(1)
        if raw.startswith("("):
            re_s, im_s = raw[1:-1].split(",")
            coeff = complex(float(re_s), float(im_s))
        else:
            coeff = complex(float(raw))
        w = _WORD_RE.match(text, m.end())
        word_txt = w.group(1).strip()
        if not word_txt:
            raise NCPolyParseError(f"missing word after coefficient {raw!r}")
        word = []
        if word_txt != "1":
            for tok in word_txt.split():
                lm = _LETTER_RE.match(tok)
                if lm is None:
                    raise NCPolyParseError(f"unknown letter {tok!r} (expected aK or adK)")
                mode = int(lm.group(2))
                max_mode = max(max_mode, mode)
                word.append((mode, lm.group(1) == "ad"))
        terms.append((coeff, tuple(word)))
        pos = w.end()
        if pos >= len(text):
            break
        pos += 1  # the '+' separator
    if modes is None:
        modes = max(max_mode + 1, 1)
    elif max_mode >= modes:
        raise NCPolyParseError(f"letter uses mode {max_mode} but only {modes} modes declared")
    return NCPoly(tuple(terms), modes)


def _fmt_float(x: float) -> str:
    return repr(float(x))


def format_ncpoly(p: NCPoly) -> str:
    """Inverse of :func:`parse_ncpoly` (round-trips exactly)."""
    if not p.terms:
        return "(0.0,0.0)*1"
    out = []
    for c, w in p.terms:
        coeff = f"({_fmt_float(c.real)},{_fmt_float(c.imag)})"
        word = " ".join(f"{'ad' if d else 'a'}{m}" for m, d in w) or "1"
        out.append(f"{coeff}*{word}")
    return " + ".join(out)


# ---------------------------------------------------------------------------
# Truncation schemes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncationScheme:
    """Galerkin space ``span{|n> : 1 + sum_m w_m n_m <= level}``.

    The identity shift is part of the reference operator, so every basis
    state has level >= 1 and ``level=0`` gives the empty space.
    """

    mode_weights: tuple[Fraction, ...]
    level: int | Fraction

    def __post_init__(self):
        weights = tuple(_as_fraction(w) for w in self.mode_weights)
        if not weights:
            raise ValueError("at least one mode is required")
        if any(w <= 0 for w in weights):
            raise ValueError(f"mode weights must be positive, got {weights}")
        level = _as_fraction(self.level)
        if level < 0:
            raise ValueError("level must be nonnegative")
        if level.denominator == 1:
            level = int(level)
        object.__setattr__(self, "mode_weights", weights)
        object.__setattr__(self, "level", level)

    @classmethod
    def single(cls, level) -> "TruncationScheme":
        return cls((Fraction(1),), level)

    @property
    def modes(self) -> int:
        return len(self.mode_weights)

    @property
    def max_weight(self) -> Fraction:
        return max(self.mode_weights)

    def with_level(self, level) -> "TruncationScheme":
        return TruncationScheme(self.mode_weights, level)

    def enlarged(self, degree: int) -> "TruncationScheme":
        """Space large enough that words of length ``degree`` never leave it."""
        return self.with_level(self.level + degree * self.max_weight)

    @cached_property
    def occupations(self) -> np.ndarray:
        """Basis multi-indices, shape ``(D, M)``, in canonical order."""
        return _enumerate_basis(self.mode_weights, _as_fraction(self.level))[0]

    @cached_property
    def levels(self) -> np.ndarray:
        """Reference-operator eigenvalue of every basis state (float)."""
        return _enumerate_basis(self.mode_weights, _as_fraction(self.level))[1]

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(v) for v in occ): i for i, occ in enumerate(self.occupations)}

    @property
    def dim(self) -> int:
        return len(self.occupations)

    def __repr__(self):
        ws = ",".join(str(w) for w in self.mode_weights)
        return f"TruncationScheme(weights=[{ws}], level={self.level}, dim={self.dim})"


@lru_cache(maxsize=64)
def _enumerate_basis(weights: tuple[Fraction, ...], level: Fraction):
    # Work in integer units of the common denominator so levels are exact.
    denom = math.lcm(*(w.denominator for w in weights), level.denominator)
    iw = [int(w * denom) for w in weights]
    budget = int(level * denom) - denom  # sum_m iw_m n_m <= budget
    if budget < 0:
        occ = np.zeros((0, len(weights)), dtype=np.int64)
        return _freeze(occ), _freeze(np.zeros(0))

    grids = [np.arange(budget // w + 1, dtype=np.int64) for w in iw]
    mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, len(iw))
    units = mesh @ np.asarray(iw, dtype=np.int64)
    keep = units <= budget
    mesh, units = mesh[keep], units[keep]
    # Sort by level then lexicographically by multi-index.
    order = np.lexsort(tuple(mesh[:, m] for m in reversed(range(mesh.shape[1]))) + (units,))
    mesh, units = mesh[order], units[order]
    levels = 1.0 + units / denom
    return _freeze(mesh), _freeze(levels)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FockOperator:
    """Dense complex matrix on a truncated Fock space."""

    matrix: np.ndarray
    space: TruncationScheme = field(repr=False)

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        d = self.space.dim
        if mat.shape != (d, d):
            raise ValueError(f"matrix shape {mat.shape} does not match space dimension {d}")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    def dag(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T, self.space)

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            if other.space != self.space:
                raise ValueError("operators live on different spaces")
            return FockOperator(self.matrix @ other.matrix, self.space)
        return self.matrix @ other

    def __add__(self, other: "FockOperator"):
        if other.space != self.space:
            raise ValueError("operators live on different spaces")
        return FockOperator(self.matrix + other.matrix, self.space)

    def __sub__(self, other: "FockOperator"):
        if other.space != self.space:
            raise ValueError("operators live on different spaces")
        return FockOperator(self.matrix - other.matrix, self.space)

    def __mul__(self, c):
        return FockOperator(self.matrix * c, self.space)

    __rmul__ = __mul__


def _apply_word(space: TruncationScheme, word: Word):
    """Apply ``word`` to every basis ket of ``space`` without truncation.

    Returns ``(rows, cols, values)`` for the entries that land back in the
    space, i.e. the compression ``P word P`` in coordinate form.
    """
    occ = np.array(space.occupations, dtype=np.int64)
    amp = np.ones(len(occ))
    alive = np.ones(len(occ), dtype=bool)
    for mode, dagger in reversed(word):
        n = occ[:, mode]
        if dagger:
            amp *= np.sqrt(n + 1.0)
            occ[:, mode] = n + 1
        else:
            alive &= n > 0
            amp *= np.sqrt(np.maximum(n, 0).astype(float))
            occ[:, mode] = np.maximum(n - 1, 0)
    index = space.index
    rows, cols, vals = [], [], []
    for j in np.flatnonzero(alive):
        i = index.get(tuple(int(v) for v in occ[j]))
        if i is not None:
            rows.append(i)
            cols.append(j)
            vals.append(amp[j])
    return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64), np.asarray(vals)


def _check_mode(space: TruncationScheme, mode: int):
    if not 0 <= mode < space.modes:
        raise IndexError(f"mode {mode} out of range for a {space.modes}-mode space")


def build_annihilation(space: TruncationScheme, mode: int = 0) -> FockOperator:
    _check_mode(space, mode)
    return build_poly_operator(space, NCPoly.annihilator(mode, space.modes))


def build_creation(space: TruncationScheme, mode: int = 0) -> FockOperator:
    _check_mode(space, mode)
    return build_poly_operator(space, NCPoly.creator(mode, space.modes))


def build_poly_operator(space: TruncationScheme, p: NCPoly) -> FockOperator:
    """Exact compression ``P_N p(a, a^dagger) P_N``.

    Never formed as a product of truncated factors: ``a a^dagger`` and
    ``a^dagger a`` would then disagree with the commutator in the top
    block.
    """
    return FockOperator(_poly_matrix(space, p), space)


@lru_cache(maxsize=256)
def _poly_matrix(space: TruncationScheme, p: NCPoly) -> np.ndarray:
    if p.modes != space.modes:
        raise ValueError(f"polynomial has {p.modes} modes, space has {space.modes}")
    d = space.dim
    mat = np.zeros((d, d), dtype=complex)
    words: dict[Word, complex] = {}
    for c, w in p.terms:
        words[w] = words.get(w, 0) + c
    for w, c in words.items():
        if c == 0:
            continue
        rows, cols, vals = _apply_word(space, w)
        np.add.at(mat, (rows, cols), c * vals)
    mat.flags.writeable = False
    return mat


def lambda_diagonal(space: TruncationScheme, k: float) -> np.ndarray:
    """Diagonal of ``Lambda^k`` with ``Lambda = Id + sum_m w_m N_m``."""
    return np.asarray(space.levels, dtype=float) ** k


def lambda_operator(space: TruncationScheme, k: float) -> FockOperator:
    return FockOperator(np.diag(lambda_diagonal(space, k)).astype(complex), space)


def projector_diagonal(space: TruncationScheme, cutoff) -> np.ndarray:
    cutoff = _as_fraction(cutoff)
    if cutoff > _as_fraction(space.level):
        raise ValueError(f"cutoff {cutoff} exceeds the ambient level {space.level}")
    return (space.levels <= float(cutoff) + 1e-12).astype(float)


def spectral_projector(space_big: TruncationScheme, cutoff) -> FockOperator:
    """Projector onto basis states whose level is at most ``cutoff``."""
    return FockOperator(np.diag(projector_diagonal(space_big, cutoff)).astype(complex), space_big)


def complement_projector(space_big: TruncationScheme, cutoff) -> FockOperator:
    return FockOperator(
        np.diag(1.0 - projector_diagonal(space_big, cutoff)).astype(complex), space_big
    )


def operator_sobolev_norm(m: FockOperator, s_in: float, s_out: float) -> float:
    """Truncated estimate of ``||m||_{H^{s_in} -> H^{s_out}}``.

    Computed as the largest singular value of
    ``Lambda^{s_out/2} m Lambda^{-s_in/2}``.
    """
    if s_in < 0 or s_out < 0:
        raise ValueError("Sobolev indices must be nonnegative")
    left = lambda_diagonal(m.space, s_out / 2)
    right = lambda_diagonal(m.space, -s_in / 2)
    scaled = left[:, None] * m.matrix * right[None, :]
    if scaled.size == 0:
        return 0.0
    return float(np.linalg.norm(scaled, 2))


# ---------------------------------------------------------------------------
# Moving between truncation levels
# ---------------------------------------------------------------------------


def embedding_indices(small: TruncationScheme, big: TruncationScheme) -> np.ndarray:
    """Positions of ``small``'s basis states inside ``big``.

    Both schemes must share mode weights and ``small.level <= big.level``.
    """
    if small.mode_weights != big.mode_weights:
        raise ValueError("schemes use different mode weights")
    if _as_fraction(small.level) > _as_fraction(big.level):
        raise ValueError("first scheme must not be larger than the second")
    index = big.index
    return np.array([index[tuple(int(v) for v in occ)] for occ in small.occupations], dtype=np.int64)


def transfer(matrix: np.ndarray, source: TruncationScheme, target: TruncationScheme) -> np.ndarray:
    """Zero-pad ``matrix`` into a larger space, or compress it into a smaller one."""
    matrix = np.asarray(matrix)
    if source == target:
        return np.array(matrix, dtype=complex)
    if _as_fraction(source.level) <= _as_fraction(target.level):
        idx = embedding_indices(source, target)
        out = np.zeros((target.dim, target.dim), dtype=complex)
        out[np.ix_(idx, idx)] = matrix
        return out
    idx = embedding_indices(target, source)
    return np.array(matrix[np.ix_(idx, idx)], dtype=complex)


def transfer_vector(vec: np.ndarray, source: TruncationScheme, target: TruncationScheme) -> np.ndarray:
    vec = np.asarray(vec)
    if _as_fraction(source.level) <= _as_fraction(target.level):
        out = np.zeros(target.dim, dtype=complex)
        out[embedding_indices(source, target)] = vec
        return out
    return np.array(vec[embedding_indices(target, source)], dtype=complex)


def number_operator(space: TruncationScheme, mode: int = 0) -> FockOperator:
    _check_mode(space, mode)
    return FockOperator(np.diag(space.occupations[:, mode].astype(float)).astype(complex), space)
