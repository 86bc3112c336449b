"""Implicit Euler time marching with full Newton and sparse direct solves."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (Discretization, StepProblem, StepState, apply_constraints,
                       assemble_jacobian, assemble_residual, mass_matrix)
from .manufactured import dirichlet_data, rhs_data
from .varexp import StressModel, discretize_exponent, frobenius, stress

__all__ = [
    "TimeGrid",
    "SolveTrace",
    "StepFailure",
    "LinearSolveError",
    "linear_solve",
    "newton_solve",
    "time_march",
    "ATOL",
    "RTOL",
    "MAX_ITER",
]

log = logging.getLogger(__name__)

ATOL = 1e-8
RTOL = 1e-10
MAX_ITER = 50


class LinearSolveError(RuntimeError):
    """Sparse factorization failed (structurally or numerically singular)."""


class StepFailure(RuntimeError):
    """Newton did not converge; carries the partial trace."""

    def __init__(self, message, trace=None, states=None):
        super().__init__(message)
        self.trace = trace
        self.states = states


@dataclass(frozen=True)
class TimeGrid:
    T: float
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("need at least one time step")

    @property
    def tau(self) -> float:
        return self.T / self.K

    def t(self, k: int) -> float:
        return k * self.T / self.K

    @property
    def times(self) -> np.ndarray:
        return np.array([self.t(k) for k in range(self.K + 1)])

    def backward_difference(self, seq) -> np.ndarray:
        """``d_tau u^k = (u^k - u^{k-1}) / tau`` for ``k = 1..K``."""
        seq = np.asarray(seq, dtype=float)
        if len(seq) != self.K + 1:
            raise ValueError("sequence must hold K + 1 entries")
        return (seq[1:] - seq[:-1]) / self.tau

    def interval(self, t: float) -> int:
        """Index ``k`` with ``t`` in ``I_k = ((k-1) tau, k tau]``; 0 for ``t = 0``."""
        if not 0.0 <= t <= self.T:
            raise ValueError("t outside [0, T]")
        k = int(np.ceil(t / self.tau - 1e-12))
        return min(max(k, 0), self.K)

    def piecewise_constant(self, seq, t: float):
        """Value of the piecewise constant interpolant ``u^k`` on ``I_k``."""
        return np.asarray(seq)[self.interval(t)]

    def piecewise_affine(self, seq, t: float):
        """Value of the continuous piecewise affine interpolant."""
        seq = np.asarray(seq, dtype=float)
        k = max(self.interval(t), 1)
        s = (t - self.t(k - 1)) / self.tau
        return (1.0 - s) * seq[k - 1] + s * seq[k]


@dataclass
class SolveTrace:
    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    flagged: list = field(default_factory=list)
    factor_nnz: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def total_iterations(self) -> int:
        return int(sum(self.iterations))


def _factor(A, symmetric: bool):
    if symmetric:
        # the saddle-point matrix is structurally symmetric with a nonzero
        # diagonal only in the velocity block; minimum degree on A + A^T with
        # weak threshold pivoting keeps fill low
        return spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=1e-3,
                         options=dict(SymmetricMode=True))
    return spla.splu(A, permc_spec="COLAMD")


def _residual_ok(A, x, b):
    res = np.linalg.norm(A @ x - b)
    return bool(np.isfinite(res)) and res <= 1e-10 * (1.0 + np.linalg.norm(b)), res


def linear_solve(A, b, check: bool = True, return_stats: bool = False):
    """Solve ``A x = b`` with SuperLU.

    The first attempt uses minimum-degree ordering on ``A + A^T`` with
    threshold pivoting; if that fails or misses the residual check, the
    solve is repeated with COLAMD and partial pivoting.

    Raises
    ------
    LinearSolveError
        If both factorizations fail or the residual check is violated.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("linear_solve needs a square matrix")
    res = np.inf
    for symmetric in (True, False):
        try:
            lu = _factor(A, symmetric)
        except RuntimeError as exc:
            err = f"sparse LU failed: {exc}"
            continue
        x = lu.solve(b)
        if not check:
            break
        ok, res = _residual_ok(A, x, b)
        if not ok:
            x = x + lu.solve(b - A @ x)
            ok, res = _residual_ok(A, x, b)
        if ok:
            break
        err = f"residual {res:.3e} exceeds tolerance (n={A.shape[0]})"
    else:
        raise LinearSolveError(err)
    if return_stats:
        return x, {"nnz_L": lu.L.nnz, "nnz_U": lu.U.nnz}
    return x


def newton_solve(x0, problem: StepProblem, atol=ATOL, rtol=RTOL, max_iter=MAX_ITER):
    """Plain Newton iteration on one step.

    Returns ``(x, iterations, residual_norms, monotone)``; stops when
    ``|r| <= atol`` or ``|r| <= rtol |r0|``.
    """
    d = problem.disc
    x = np.array(x0, dtype=float)
    x[d.boundary] = problem.bc
    r = assemble_residual(problem, x)
    norms = [float(np.linalg.norm(r))]
    r0 = norms[0]
    it = 0
    while norms[-1] > atol and norms[-1] > rtol * r0:
        if it >= max_iter:
            raise StepFailure(
                f"Newton did not converge in {max_iter} iterations "
                f"(|r| = {norms[-1]:.3e})")
        J = assemble_jacobian(problem, x)
        Je, rhs = apply_constraints(J, -r, d)
        x += linear_solve(Je, rhs)
        r = assemble_residual(problem, x)
        norms.append(float(np.linalg.norm(r)))
        it += 1
        if not np.isfinite(norms[-1]):
            raise StepFailure("Newton diverged (non-finite residual)")
    monotone = all(b < a for a, b in zip(norms, norms[1:]))
    return x, it, norms, monotone


def _l2_projection(disc: Discretization, func):
    """L2 projection of ``func`` onto the full velocity space (no constraints)."""
    d = disc
    M = sp.csc_matrix(mass_matrix(d))
    vals = func(d.xq)  # (C, nq, 2)
    cv = d.dofmap.cell_vel
    out = np.zeros((2, d.dofmap.n_vel))
    for k in range(2):
        loc = np.einsum("cq,cq,qa->ca", d.weights, vals[..., k], d.phi)
        rhs = np.bincount(cv.ravel(), weights=loc.ravel(), minlength=d.dofmap.n_vel)
        out[k] = linear_solve(M, rhs)
    return out


def step_data(case, disc: Discretization, model: StressModel, t: float,
              variant: str, mean: float | None = None):
    """Cellwise exponent, quadrature-point data and boundary values at ``t``."""
    if mean is None:
        mean = case.pressure_mean(t, disc.mesh, disc.rule.degree)
    p = discretize_exponent(case.exponent, t, disc.mesh)
    f, F = rhs_data(case, t, disc.xq, model, variant, mean)
    bc = dirichlet_data(case, t, disc.dofmap).ravel()
    return p, f, F, bc, mean


def time_march(case, disc: Discretization, model: StressModel, K: int,
               variant: str = "navier_stokes", atol=ATOL, rtol=RTOL,
               max_iter=MAX_ITER):
    """Run the scheme for ``k = 1..K`` from the projected initial velocity.

    Returns
    -------
    states : list of StepState
        ``states[k]`` for ``k = 0..K``.
    trace : SolveTrace
    means : list of float
        Pressure mean removed from the exact pressure at each ``t_k``.
    """
    grid = TimeGrid(case.T, K)
    tau = grid.tau
    start = time.perf_counter()
    x = disc.zero_vector()
    nv = disc.dofmap.n_vel
    x[:2 * nv] = _l2_projection(disc, lambda y: case.velocity(0.0, y)).ravel()
    states = [StepState(x.copy(), 0, 0.0)]
    means = [0.0]
    trace = SolveTrace()
    w = disc.weights
    v0, _ = disc.velocity_at_qp(x)
    half_norm0 = 0.5 * float(np.sum(w * (v0 ** 2).sum(-1)))
    lhs_acc = rhs_acc = 0.0
    for k in range(1, K + 1):
        t = grid.t(k)
        p, f, F, bc, mean = step_data(case, disc, model, t, variant)
        problem = StepProblem(disc, model, states[-1].x, p, f, F, tau, bc, variant)
        try:
            x, it, norms, monotone = newton_solve(states[-1].x, problem, atol, rtol, max_iter)
        except StepFailure as exc:
            trace.seconds = time.perf_counter() - start
            exc.trace, exc.states = trace, states
            raise StepFailure(f"step {k} (t={t:.6g}): {exc}", trace, states) from exc
        states.append(StepState(x, k, t))
        means.append(mean)
        trace.iterations.append(it)
        trace.residuals.append(norms)
        trace.flagged.append(not monotone)

        # discrete energy balance, tested against v^k itself
        v, G = disc.velocity_at_qp(x)
        D = 0.5 * (G + np.swapaxes(G, -1, -2))
        S = stress(np.broadcast_to(p[:, None], w.shape), D, model)
        lhs_acc += tau * float(np.sum(w * np.einsum("cqij,cqij->cq", S, D)))
        rhs_acc += tau * float(np.sum(w * (np.einsum("cqi,cqi->cq", f, v)
                                           + np.einsum("cqij,cqij->cq", F, D))))
        kinetic = 0.5 * float(np.sum(w * (v ** 2).sum(-1)))
        trace.energy.append((kinetic + lhs_acc, half_norm0 + rhs_acc))
        log.debug("step %d t=%.4g newton=%d |r|=%.2e", k, t, it, norms[-1])
    trace.seconds = time.perf_counter() - start
    return states, trace, means
