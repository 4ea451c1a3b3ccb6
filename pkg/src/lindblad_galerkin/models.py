"""Example Lindbladians: quantum Ornstein-Uhlenbeck, dissipative cat qubit,
and the two-mode cat qubit with buffer cavity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .fock_ops import NCPoly, parse_ncpoly
from .lindblad import LindbladModel


@dataclass(frozen=True)
class ModelSpec:
    name: str
    params: dict = field(compare=False)
    model: LindbladModel

    @property
    def d_hamiltonian(self) -> int:
        return self.model.d_hamiltonian

    @property
    def d_jump(self) -> int:
        return self.model.d_jump

    @property
    def degree(self) -> int:
        return self.model.degree

    def rate_exponent(self, k: float) -> float:
        """Predicted algebraic rate ``(k - d)/2`` for data in ``W^{k,1}``."""
        return (k - self.degree) / 2

    def predicted_slope(self, k: float) -> float:
        return -self.rate_exponent(k)


def _positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")


def _nonnegative(name, value):
    if not value >= 0:
        raise ValueError(f"{name} must be nonnegative, got {value}")


def qou_model(lam: float, mu: float) -> ModelSpec:
    """``lam^2 D[a] + mu^2 D[a^dag]``: damping towards a thermal state when lam > mu."""
    _positive("lambda", lam)
    _positive("mu", mu)
    a, ad = NCPoly.annihilator(), NCPoly.creator()
    model = LindbladModel(NCPoly.zero(), (lam * a, mu * ad), (1,), "qou")
    return ModelSpec("qou", {"lambda": lam, "mu": mu}, model)


def cat_model(kappa2: float, alpha: float, kappa1: float = 0.0, kappa1p: float = 0.0,
              hamiltonian: NCPoly | None = None) -> ModelSpec:
    """Two-photon dissipation ``kappa2 D[a^2 - alpha^2]`` plus optional
    single-photon loss/gain and an optional quadratic Hamiltonian."""
    _positive("kappa2", kappa2)
    _nonnegative("alpha", alpha)
    _nonnegative("kappa1", kappa1)
    _nonnegative("kappa1p", kappa1p)
    a, ad = NCPoly.annihilator(), NCPoly.creator()
    jumps = [math.sqrt(kappa2) * (a * a - alpha**2)]
    if kappa1 > 0:
        jumps.append(math.sqrt(kappa1) * a)
    if kappa1p > 0:
        jumps.append(math.sqrt(kappa1p) * ad)
    if hamiltonian is None:
        hamiltonian = NCPoly.zero()
    elif hamiltonian.degree > 2:
        raise ValueError(f"cat-model Hamiltonian must be at most quadratic, got degree {hamiltonian.degree}")
    model = LindbladModel(hamiltonian, tuple(jumps), (1,), "cat")
    params = {"kappa2": kappa2, "alpha": alpha, "kappa1": kappa1, "kappa1p": kappa1p}
    return ModelSpec("cat", params, model)


def cat_buffer_model(alpha: float, kappa_b: float) -> ModelSpec:
    """Storage mode ``a`` (weight 1/2) exchanging photon pairs with a lossy buffer ``b``."""
    _nonnegative("alpha", alpha)
    _positive("kappa_b", kappa_b)
    a, ad = NCPoly.annihilator(0, 2), NCPoly.creator(0, 2)
    b, bd = NCPoly.annihilator(1, 2), NCPoly.creator(1, 2)
    h = (a * a - alpha**2) * bd + (ad * ad - alpha**2) * b
    model = LindbladModel(h, (math.sqrt(kappa_b) * b,), (Fraction(1, 2), Fraction(1)), "cat_buffer")
    return ModelSpec("cat_buffer", {"alpha": alpha, "kappa_b": kappa_b}, model)


def custom_model(hamiltonian: str, jumps, mode_weights=(1,), name: str = "custom") -> ModelSpec:
    """Model from polynomial strings in the config grammar."""
    modes = len(mode_weights)
    h = parse_ncpoly(hamiltonian, modes)
    js = tuple(parse_ncpoly(j, modes) for j in jumps)
    model = LindbladModel(h, js, tuple(mode_weights), name)
    return ModelSpec(name, {"hamiltonian": hamiltonian, "jumps": list(jumps)}, model)


MODEL_PARAMS = {
    "qou": ("lambda", "mu"),
    "cat": ("kappa2", "alpha", "kappa1", "kappa1p", "hamiltonian"),
    "cat_buffer": ("alpha", "kappa_b"),
    "custom": ("hamiltonian", "jumps", "mode_weights"),
}


def model_from_params(name: str, params: dict) -> ModelSpec:
    if name == "qou":
        return qou_model(params["lambda"], params["mu"])
    if name == "cat":
        h = params.get("hamiltonian")
        return cat_model(
            params["kappa2"],
            params["alpha"],
            params.get("kappa1", 0.0),
            params.get("kappa1p", 0.0),
            parse_ncpoly(h, 1) if h else None,
        )
    if name == "cat_buffer":
        return cat_buffer_model(params["alpha"], params["kappa_b"])
    if name == "custom":
        weights = [Fraction(str(w)) for w in params.get("mode_weights", [1])]
        return custom_model(params.get("hamiltonian", "0*1"), params.get("jumps", []), weights)
    raise ValueError(f"unknown model {name!r}; choose from {sorted(MODEL_PARAMS)}")
