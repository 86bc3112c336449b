"""Natural error quantities, experimental orders of convergence, expected rates.

For discrete iterates ``(v^k, pi^k)`` and the exact solution at ``t_k``::

    e_Dv = (sum_k tau |F_n(Dv^k) - F_n(Dv(t_k))|_2^2)^(1/2)
    e_S  = (sum_k tau |F*_n(S_n(Dv^k)) - F*_n(S(Dv(t_k)))|_2^2)^(1/2)
    e_v  = max_k |v^k - v(t_k)|_2
    e_pi = (sum_k tau |((delta + |Dv(t_k)|)^(p_n - 1) + |pi^k - pi(t_k)|)^((p_n' - 2)/2)
                        (pi^k - pi(t_k))|_2^2)^(1/2)

where ``p_n`` is the cellwise exponent of the scheme and ``S`` in the exact
stress uses the continuous exponent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .varexp import StressModel, conjugate, discretize_exponent, natural_transforms, stress

__all__ = [
    "ERROR_NAMES",
    "LevelErrors",
    "ErrorReport",
    "error_quantities",
    "eoc",
    "expected_rate",
]

ERROR_NAMES = ("e_Dv", "e_S", "e_v", "e_pi")


@dataclass(frozen=True)
class LevelErrors:
    level: int
    h: float
    tau: float
    e_Dv: float
    e_S: float
    e_v: float
    e_pi: float

    def __post_init__(self):
        for name in ERROR_NAMES:
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"{name} must be non-negative")

    def get(self, name: str) -> float:
        return getattr(self, name)


@dataclass
class ErrorReport:
    """Errors per level and EOCs between consecutive levels."""

    expected_rate: float
    levels: list = field(default_factory=list)

    def add(self, errors: LevelErrors):
        if self.levels and errors.level != self.levels[-1].level + 1:
            raise ValueError("levels must be added consecutively")
        self.levels.append(errors)

    def eocs(self, name: str) -> list:
        """EOC per level (``None`` at the first level or where undefined)."""
        out = [None]
        for prev, cur in zip(self.levels, self.levels[1:]):
            out.append(eoc(prev.get(name), cur.get(name), prev.h, prev.tau, cur.h, cur.tau))
        return out[:len(self.levels)]

    def eoc_at(self, name: str, level: int):
        idx = [lv.level for lv in self.levels].index(level)
        return self.eocs(name)[idx]


def eoc(e_prev, e, h_prev, tau_prev, h, tau):
    """``log(e / e_prev) / log((h + tau) / (h_prev + tau_prev))``; ``None`` if undefined."""
    if not (e_prev > 0.0 and e > 0.0):
        return None
    return math.log(e / e_prev) / math.log((h + tau) / (h_prev + tau_prev))


def expected_rate(case) -> float:
    """``alpha (p+)' / 2``."""
    pp = case.p_plus
    return case.alpha * pp / (pp - 1.0) / 2.0


def _l2sq(w, diff):
    """Integral of ``|diff|^2`` with the trailing axes beyond ``w`` summed."""
    axes = tuple(range(w.ndim, diff.ndim))
    return float(np.sum(w * (diff ** 2).sum(axis=axes) if axes else w * diff ** 2))


def error_quantities(states, case, disc, model: StressModel, means, tau=None):
    """The four error quantities of a completed run.

    Parameters
    ----------
    states : list of StepState
        ``states[k]`` for ``k = 0..K`` (index 0 is not used).
    case : manufactured case
    disc : Discretization
    model : StressModel
    means : sequence of float
        Pressure mean removed at each ``t_k`` (as returned by ``time_march``).
    tau : float, optional
        Time step; defaults to ``T / K``.

    Returns
    -------
    tuple of float
        ``(e_Dv, e_S, e_v, e_pi)``.
    """
    K = len(states) - 1
    if K < 1 or len(means) != K + 1:
        raise ValueError("need the states and pressure means of a completed run")
    if tau is None:
        tau = case.T / K
    w = disc.weights
    dv = ds = dpi = 0.0
    ev = 0.0
    for k in range(1, K + 1):
        st = states[k]
        t = st.t
        fl = case.fields(t, disc.xq)
        Dex = fl.D_v
        pex = case.exponent(t, disc.xq)
        pn = np.broadcast_to(discretize_exponent(case.exponent, t, disc.mesh)[:, None], w.shape)

        v, G = disc.velocity_at_qp(st.x)
        D = 0.5 * (G + np.swapaxes(G, -1, -2))
        pi = disc.pressure_at_qp(st.x)
        pi_ex = fl.pi_raw - case.pressure_scale(t) * means[k]

        Fh, _ = natural_transforms(pn, D, model)
        Fe, _ = natural_transforms(pn, Dex, model)
        dv += tau * _l2sq(w, Fh - Fe)

        _, Fsh = natural_transforms(pn, stress(pn, D, model), model)
        _, Fse = natural_transforms(pn, stress(pex, Dex, model), model)
        ds += tau * _l2sq(w, Fsh - Fse)

        ev = max(ev, math.sqrt(_l2sq(w, v - fl.v)))

        diff = pi - pi_ex
        nDex = np.sqrt(np.einsum("...ij,...ij->...", Dex, Dex))
        base = (model.delta + nDex) ** (pn - 1.0) + np.abs(diff)
        with np.errstate(divide="ignore"):
            weight = np.where(base > 0.0, base ** (0.5 * (conjugate(pn) - 2.0)), 0.0)
        dpi += tau * _l2sq(w, weight * diff)
    return math.sqrt(dv), math.sqrt(ds), ev, math.sqrt(dpi)
