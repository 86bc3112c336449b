"""Variable exponents, modular / Luxembourg norm, and the power-law stress.

All functions act elementwise on arrays; matrices are stored in the trailing
two axes, so ``A.shape == (..., 2, 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "ExponentField",
    "StressModel",
    "discretize_exponent",
    "conjugate",
    "sobolev_conjugate",
    "exponent_transforms",
    "modular",
    "luxembourg_norm",
    "frobenius",
    "stress",
    "stress_jacobian",
    "natural_transforms",
    "SYM_IDENTITY",
]

DIM = 2

# I_sym[i, j, k, l] = (d_ik d_jl + d_il d_jk) / 2
_I = np.eye(DIM)
SYM_IDENTITY = 0.5 * (np.einsum("ik,jl->ijkl", _I, _I) + np.einsum("il,jk->ijkl", _I, _I))


@dataclass(frozen=True)
class ExponentField:
    """Power-law index ``p(t, x)`` with known bounds ``1 < p_minus <= p <= p_plus``."""

    func: Callable[[float, np.ndarray], np.ndarray]
    p_minus: float
    p_plus: float

    def __post_init__(self):
        if not (1.0 < self.p_minus <= self.p_plus < np.inf):
            raise ValueError("exponent bounds must satisfy 1 < p_minus <= p_plus < inf")

    def __call__(self, t, x):
        return self.func(t, np.asarray(x, dtype=float))

    @classmethod
    def constant(cls, value: float) -> "ExponentField":
        return cls(lambda t, x: np.full(np.shape(x)[:-1], float(value)), value, value)

    def snapshot(self, t_k: float, mesh) -> np.ndarray:
        return discretize_exponent(self, t_k, mesh)


def discretize_exponent(p, t_k: float, mesh) -> np.ndarray:
    """One-point (right endpoint, barycenter) sample of ``p``: one value per cell."""
    return np.asarray(p(t_k, mesh.barycenters()), dtype=float)


def conjugate(r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 1.0):
        raise ValueError("conjugate exponent requires r > 1")
    return r / (r - 1.0)


def sobolev_conjugate(r, d: int = DIM):
    """``r (d + 2) / d``; the parabolic embedding exponent."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 1.0):
        raise ValueError("sobolev_conjugate requires r >= 1")
    return r * (d + 2) / d


def exponent_transforms(r):
    """Return ``(r', r_*)`` for ``d = 2``."""
    return conjugate(r), sobolev_conjugate(r)


def modular(u, p, weights) -> float:
    """Quadrature approximation of ``int |u|^p dx``.

    Parameters
    ----------
    u : ndarray
        Samples at quadrature points, shape ``weights.shape`` (scalar) or
        ``weights.shape + (m,)`` / ``+ (m, m)`` for vector / matrix fields.
    p : ndarray
        Exponent at the same points (broadcastable to ``weights``).
    weights : ndarray
        Physical quadrature weights.
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(weights, dtype=float)
    extra = u.ndim - w.ndim
    mod = np.abs(u) if extra == 0 else np.sqrt((u ** 2).sum(axis=tuple(range(w.ndim, u.ndim))))
    return float(np.sum(w * mod ** np.asarray(p, dtype=float)))


def luxembourg_norm(u, p, weights, rtol: float = 1e-10) -> float:
    """``inf{lam > 0 : modular(u / lam) <= 1}`` by bisection."""
    u = np.asarray(u, dtype=float)
    p_arr = np.broadcast_to(np.asarray(p, dtype=float), np.shape(weights))
    m = modular(u, p_arr, weights)
    if m == 0.0:
        return 0.0
    pm, pp = float(p_arr.min()), float(p_arr.max())
    # min(l^-p-, l^-p+) m <= modular(u/l) <= max(l^-p-, l^-p+) m
    lo = min(m ** (1.0 / pm), m ** (1.0 / pp))
    hi = max(m ** (1.0 / pm), m ** (1.0 / pp))
    lo, hi = 0.5 * lo, 2.0 * hi
    while modular(u / lo, p_arr, weights) <= 1.0:
        lo *= 0.5
    while modular(u / hi, p_arr, weights) > 1.0:
        hi *= 2.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if modular(u / mid, p_arr, weights) > 1.0:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass(frozen=True)
class StressModel:
    """``S(p, A) = mu0 (delta + |A|)^(p-2) A``."""

    mu0: float = 0.5
    delta: float = 1e-5

    def __post_init__(self):
        if not self.mu0 > 0.0:
            raise ValueError("mu0 must be positive")
        if not self.delta >= 0.0:
            raise ValueError("delta must be non-negative")


def frobenius(A):
    A = np.asarray(A, dtype=float)
    return np.sqrt(np.einsum("...ij,...ij->...", A, A))


def stress(p, A, model: StressModel):
    A = np.asarray(A, dtype=float)
    p = np.asarray(p, dtype=float)
    n = frobenius(A)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = model.mu0 * (model.delta + n) ** (p - 2.0)
    coef = np.where(n == 0.0, 0.0, coef)
    return coef[..., None, None] * A


def stress_coefficients(p, A, model: StressModel):
    """Scalars ``(a, b, n)`` with ``dS/dA = a I_sym + b (A x A)`` and ``n = |A|``.

    ``b`` already contains the ``1/|A|`` factor and is zero where ``|A| = 0``.
    Singular points (``delta = 0``, ``|A| = 0``, ``p < 2``) get ``a = mu0``.
    """
    p = np.asarray(p, dtype=float)
    n = frobenius(A)
    base = model.delta + n
    singular = (base == 0.0) & (p < 2.0)
    safe = np.where(base == 0.0, 1.0, base)
    a = model.mu0 * np.where(base == 0.0, np.where(p == 2.0, 1.0, 0.0), safe ** (p - 2.0))
    a = np.where(singular, model.mu0, a)
    nz = n > 0.0
    b = np.where(nz, model.mu0 * (p - 2.0) * safe ** (p - 3.0) / np.where(nz, n, 1.0), 0.0)
    return a, b, n, singular


def stress_jacobian(p, A, model: StressModel, return_flag: bool = False):
    """Fourth-order tangent ``dS/dA`` of shape ``(..., 2, 2, 2, 2)``."""
    A = np.asarray(A, dtype=float)
    a, b, _, singular = stress_coefficients(p, A, model)
    C = a[..., None, None, None, None] * SYM_IDENTITY \
        + b[..., None, None, None, None] * np.einsum("...ij,...kl->...ijkl", A, A)
    if return_flag:
        return C, singular
    return C


def natural_transforms(p, A, model: StressModel):
    """``F(A) = (delta + |A|)^((p-2)/2) A`` and
    ``F*(A) = (delta^(p-1) + |A|)^((p'-2)/2) A``."""
    A = np.asarray(A, dtype=float)
    p = np.asarray(p, dtype=float)
    n = frobenius(A)
    pc = conjugate(p)
    d = model.delta
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (d + n) ** (0.5 * (p - 2.0))
        fs = (d ** (p - 1.0) + n) ** (0.5 * (pc - 2.0))
    f = np.where(n == 0.0, 0.0, f)
    fs = np.where(n == 0.0, 0.0, fs)
    return f[..., None, None] * A, fs[..., None, None] * A
