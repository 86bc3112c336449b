"""Manufactured solutions with fractional regularity and polynomial debug data.

The fractional case uses the radial power-law index

    p(t, x) = p+ + s(x) (p- + t - p+),   s(x) = |x|^alpha / 2^(alpha/2),

the velocity ``v(t, x) = t |x|^rho_v (x2, -x1)`` and the pressure
``pi(t, x) = 25 t (|x|^rho_pi - <|.|^rho_pi>)`` with exponents

    rho_v  = 2 (beta - 1) / p + delta_reg,
    rho_pi = gamma - 2 / p' + delta_reg.

Because ``p`` depends on ``|x|`` only, every gradient of ``rho_v`` is radial
and therefore orthogonal to ``(x2, -x1)``: the velocity is exactly
divergence free.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .fem import quadrature_rule
from .varexp import ExponentField, StressModel, stress

__all__ = [
    "ExactFields",
    "FractionalCase",
    "PolynomialCase",
    "SingularityError",
    "rhs_data",
    "dirichlet_data",
    "initial_velocity",
    "pressure_mean",
]

_ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])  # grad of (x2, -x1)


class SingularityError(ValueError):
    """Exact fields requested at the singular corner x = 0."""


class ExactFields(NamedTuple):
    v: np.ndarray        # (..., 2)
    grad_v: np.ndarray   # (..., 2, 2), grad_v[..., i, j] = d_j v_i
    dt_v: np.ndarray     # (..., 2)
    pi_raw: np.ndarray   # (...,) pressure before the mean is removed

    @property
    def D_v(self):
        return 0.5 * (self.grad_v + np.swapaxes(self.grad_v, -1, -2))


def _sym(G):
    return 0.5 * (G + np.swapaxes(G, -1, -2))


class _CaseBase:
    T: float
    mean_is_zero = False

    def exponent_field(self) -> ExponentField:
        return ExponentField(self.exponent, self.p_minus, self.p_plus)

    def exponent(self, t, x):
        return self.index_p(t, x)[0]

    def pressure(self, t, x, mean):
        return self.fields(t, x).pi_raw - self.pressure_scale(t) * mean

    def velocity(self, t, x):
        """Velocity with the continuous extension at the corner ``x = 0``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        nz = np.einsum("...i,...i->...", x, x) > 0.0
        if np.any(nz):
            out[nz] = self.fields(t, x[nz]).v
        if np.any(~nz):
            out[~nz] = self._velocity_at_origin(t)
        return out

    def _velocity_at_origin(self, t):
        return 0.0


@dataclass(frozen=True)
class FractionalCase(_CaseBase):
    """The singular test problem on the unit square.

    Parameters
    ----------
    p_minus : float
        Lower exponent bound (> 2); ``p_plus = p_minus + 1``.
    alpha : float
        Hoelder exponent of ``p`` in (0, 1]; also the default for ``beta``,
        ``gamma``.
    delta_reg : float
        Additive shift inside ``rho_v`` and ``rho_pi``.
    p_override : float, optional
        Replace the index by this constant (debug runs, e.g. ``p = 2``).
    """

    p_minus: float
    alpha: float
    beta: float | None = None
    gamma: float | None = None
    delta_reg: float = 1e-5
    T: float = 0.1
    p_override: float | None = None
    _b: float = field(init=False, repr=False)
    _g: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.p_override is None and not self.p_minus > 2.0:
            raise ValueError("p_minus must exceed 2")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        object.__setattr__(self, "_b", self.alpha if self.beta is None else self.beta)
        object.__setattr__(self, "_g", self.alpha if self.gamma is None else self.gamma)

    @property
    def p_plus(self) -> float:
        return self.p_minus + 1.0 if self.p_override is None else self.p_override

    @property
    def p_lower(self) -> float:
        return self.p_minus if self.p_override is None else self.p_override

    def exponent_field(self) -> ExponentField:
        return ExponentField(self.exponent, self.p_lower, self.p_plus)

    def index_p(self, t, x):
        """Return ``(p, grad_x p, d_t p)``; ``grad_x p := 0`` at ``x = 0``."""
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        if self.p_override is not None:
            return (np.full(shape, float(self.p_override)), np.zeros(x.shape),
                    np.zeros(shape))
        a = self.alpha
        r2 = np.einsum("...i,...i->...", x, x)
        r = np.sqrt(r2)
        scale = 2.0 ** (0.5 * a)
        s = r ** a / scale
        jump = self.p_minus + t - self.p_plus
        p = self.p_plus + s * jump
        with np.errstate(divide="ignore", invalid="ignore"):
            ds = np.where(r2 > 0.0, a * r ** (a - 2.0) / scale, 0.0)
        grad = (ds * jump)[..., None] * x
        return p, grad, s

    def rho_v(self, p):
        return 2.0 * (self._b - 1.0) / p + self.delta_reg

    def rho_pi(self, p):
        return self._g - 2.0 * (p - 1.0) / p + self.delta_reg

    def pressure_scale(self, t):
        return 25.0 * t

    def fields(self, t, x) -> ExactFields:
        x = np.asarray(x, dtype=float)
        r2 = np.einsum("...i,...i->...", x, x)
        if np.any(r2 == 0.0):
            raise SingularityError("exact fields are singular at x = 0")
        p, grad_p, dt_p = self.index_p(t, x)
        lnr = 0.5 * np.log(r2)

        # velocity amplitude g = |x|^rho_v
        rho = self.rho_v(p)
        drho = -2.0 * (self._b - 1.0) / p ** 2
        g = np.exp(rho * lnr)
        grad_g = g[..., None] * (lnr[..., None] * drho[..., None] * grad_p
                                 + (rho / r2)[..., None] * x)
        dt_g = g * lnr * drho * dt_p

        w = np.stack([x[..., 1], -x[..., 0]], axis=-1)
        v = t * g[..., None] * w
        grad_v = t * (w[..., :, None] * grad_g[..., None, :] + g[..., None, None] * _ROT)
        dt_v = (g + t * dt_g)[..., None] * w

        pi_raw = self.pressure_scale(t) * np.exp(self.rho_pi(p) * lnr)
        return ExactFields(v, grad_v, dt_v, pi_raw)

    def pressure_mean(self, t, mesh, degree: int = 8) -> float:
        return pressure_mean(self, t, mesh, degree)

    def mean_integrand(self, t, x):
        """``|x|^rho_pi(t, x)``, the function whose mean is removed."""
        p = self.exponent(t, x)
        r2 = np.einsum("...i,...i->...", x, x)
        return np.exp(self.rho_pi(p) * 0.5 * np.log(r2))


@dataclass(frozen=True)
class PolynomialCase(_CaseBase):
    """Quadratic, divergence-free velocity and linear pressure, both linear in t.

    ``v = t (x^2 - 2xy + y, y^2 - 2xy - x)``, ``pi = t (x - y)``.  With a
    constant exponent 2 the Taylor--Hood scheme reproduces them exactly.
    """

    p_value: float = 2.0
    T: float = 0.1
    mean_is_zero = True

    @property
    def p_minus(self):
        return self.p_value

    @property
    def p_plus(self):
        return self.p_value

    def index_p(self, t, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        return np.full(shape, self.p_value), np.zeros(x.shape), np.zeros(shape)

    def pressure_scale(self, t):
        return 0.0

    def fields(self, t, x) -> ExactFields:
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        q = np.stack([X ** 2 - 2 * X * Y + Y, Y ** 2 - 2 * X * Y - X], axis=-1)
        grad_q = np.empty(x.shape + (2,))
        grad_q[..., 0, 0] = 2 * X - 2 * Y
        grad_q[..., 0, 1] = -2 * X + 1
        grad_q[..., 1, 0] = -2 * Y - 1
        grad_q[..., 1, 1] = 2 * Y - 2 * X
        return ExactFields(t * q, t * grad_q, q, t * (X - Y))

    def velocity(self, t, x):
        return self.fields(t, x).v

    def pressure_mean(self, t, mesh, degree: int = 8) -> float:
        return 0.0


def pressure_mean(case, t, mesh, degree: int = 8) -> float:
    """Quadrature mean of ``|x|^rho_pi(t, x)`` over the unit square."""
    rule = quadrature_rule(degree)
    B, b = mesh.affine_maps()
    xq = np.einsum("cij,qj->cqi", B, rule.points) + b[:, None, :]
    w = np.abs(np.linalg.det(B))[:, None] * rule.weights[None, :]
    vals = case.mean_integrand(t, xq)
    return float(np.sum(w * vals) / np.sum(w))


def rhs_data(case, t, x, model: StressModel, variant: str = "navier_stokes",
             mean: float = 0.0):
    """Volume force ``f`` and stress-like datum ``F`` at points ``x``.

    ``f = d_t v``, ``F = S(p(t, x), D v) - v (x) v - pi I`` (the convective
    part only for the Navier--Stokes variant).  Tested against divergence-free
    functions that vanish on the boundary, these reproduce the weak form.
    """
    fl = case.fields(t, x)
    p = case.exponent(t, x)
    F = stress(p, fl.D_v, model)
    if variant == "navier_stokes":
        F = F - fl.v[..., :, None] * fl.v[..., None, :]
    pi = fl.pi_raw - case.pressure_scale(t) * mean
    F = F - pi[..., None, None] * np.eye(2)
    return fl.dt_v, F


def dirichlet_data(case, t, dofmap) -> np.ndarray:
    """Exact velocity at the boundary nodes, shape (2, n_boundary)."""
    nodes = dofmap.nodes[dofmap.boundary_vel]
    return case.velocity(t, nodes).T.copy()


def initial_velocity(case, dofmap) -> np.ndarray:
    """Nodal values of ``v(0, .)`` (identically zero for both shipped cases)."""
    return dofmap.interpolate_velocity(lambda x: case.velocity(0.0, x))
