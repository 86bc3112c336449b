"""Residual and Newton Jacobian of one implicit Euler step.

For a step ``t_{k-1} -> t_k`` the unknown ``x = (v, pi, lam)`` solves

    (d_tau v, z) + (S(p_k, Dv), Dz) + c(v, v, z) - (pi, div z)
        - (f, z) - (F, Dz)                                   = 0
    -(div v, q) + lam (1, q)                                 = 0
    (pi, 1)                                                  = 0

for all velocity tests ``z`` vanishing on the boundary and all pressure tests
``q``, with the skew convective form

    c(v, v, z) = 1/2 ((v . grad) v, z) - 1/2 ((v . grad) z, v)

(Navier--Stokes variant only).  Rows of boundary velocity DOFs are replaced
by ``x_i - g_i``.  The multiplier enters the divergence rows so the system
stays square and symmetric; it absorbs the discrete boundary flux of the
interpolated Dirichlet data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import (DofMap, build_dof_map, quadrature_rule, reference_basis,
                  velocity_reference_basis, ElementKind)
from .mesh import Triangulation
from .varexp import SYM_IDENTITY, StressModel, stress, stress_coefficients

__all__ = [
    "Discretization",
    "StepState",
    "StepProblem",
    "assemble_residual",
    "assemble_jacobian",
    "apply_constraints",
    "convective_residual",
    "mass_matrix",
    "VARIANTS",
]

VARIANTS = ("stokes", "navier_stokes")

# pointwise features of a local basis function: (v1, v2, G11, G12, G21, G22, pi)
NF = 7
_ISYM_FLAT = SYM_IDENTITY.reshape(4, 4)


class Discretization:
    """Mesh, DOF map, quadrature and cached geometry for assembly.

    Parameters
    ----------
    mesh : Triangulation
    pair : ElementPair or str
    degree : int
        Volume quadrature degree used for every form.
    """

    def __init__(self, mesh: Triangulation, pair, degree: int = 8):
        self.mesh = mesh
        self.dofmap: DofMap = build_dof_map(mesh, pair)
        self.rule = quadrature_rule(degree)
        dm = self.dofmap

        B, b = mesh.affine_maps()
        det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        Binv = np.linalg.inv(B)
        self.phi, dref = velocity_reference_basis(dm.pair, self.rule.points)
        # physical gradients: grad_x = B^{-T} grad_xi
        self.dphi = np.einsum("qaj,cji->cqai", dref, Binv)
        self.psi = reference_basis(ElementKind.P1, self.rule.points)[0]
        self.weights = np.abs(det)[:, None] * self.rule.weights[None, :]
        self.xq = np.einsum("cij,qj->cqi", B, self.rule.points) + b[:, None, :]
        self.nloc = self.phi.shape[1]

        nv, nloc = dm.n_vel, self.nloc
        self.local_dofs = np.hstack([dm.cell_vel, dm.cell_vel + nv,
                                     dm.cell_pres + dm.pres_offset])
        self.n = dm.n_total
        self.pressure_integrals = np.bincount(
            dm.cell_pres.ravel(),
            weights=np.einsum("cq,qb->cb", self.weights, self.psi).ravel(),
            minlength=dm.n_pres)
        self._build_features()
        self._build_pattern()

        bnd = dm.boundary_dofs()
        self.dirichlet = np.zeros(self.n, dtype=bool)
        self.dirichlet[bnd] = True
        self.boundary = bnd

    def _build_features(self):
        C, nq, nloc = self.dphi.shape[0], len(self.rule), self.nloc
        nl = 2 * nloc + 3
        Z = np.zeros((C, nq, nl, NF))
        for k in range(2):
            rows = slice(k * nloc, (k + 1) * nloc)
            Z[:, :, rows, k] = self.phi[None]
            Z[:, :, rows, 2 + 2 * k:4 + 2 * k] = self.dphi
        Z[:, :, 2 * nloc:, 6] = self.psi[None]
        self._Z = Z
        # (C, nq * NF, nl) view used for evaluation and for the trial side
        self._Zt = np.ascontiguousarray(Z.transpose(0, 1, 3, 2).reshape(C, nq * NF, nl))

    def features_at_qp(self, x):
        """Velocity, gradient and pressure at quadrature points, (C, nq, 7)."""
        coef = np.asarray(x)[self.local_dofs]
        u = np.matmul(self._Zt, coef[..., None])
        return u.reshape(coef.shape[0], -1, NF)

    def test_integral(self, s):
        """Local vectors ``sum_q w s . features(test)`` for ``s`` of shape (C, nq, 7)."""
        sw = (s * self.weights[..., None]).reshape(s.shape[0], 1, -1)
        return np.matmul(sw, self._Zt)[:, 0, :]

    def bilinear(self, M):
        """Local matrices ``sum_q w Z M Z^T`` for pointwise (C, nq, 7, 7) ``M``."""
        Mw = M * self.weights[..., None, None]
        ZM = np.matmul(self._Z, Mw)
        C, nq, nl, _ = ZM.shape
        ZM = ZM.transpose(0, 2, 1, 3).reshape(C, nl, nq * NF)
        return np.matmul(ZM, self._Zt)

    def _build_pattern(self):
        L = self.local_dofs
        C, nl = L.shape
        m = self.dofmap.mult_index
        pres = np.arange(self.dofmap.n_pres) + self.dofmap.pres_offset
        rows = np.concatenate([np.repeat(L, nl, axis=1).ravel(), pres,
                               np.full(len(pres), m), [m]])
        cols = np.concatenate([np.tile(L, (1, nl)).ravel(), np.full(len(pres), m),
                               pres, [m]])
        keys = rows.astype(np.int64) * self.n + cols
        ukeys, inverse = np.unique(keys, return_inverse=True)
        self._scatter = inverse
        self.nnz = len(ukeys)
        r = ukeys // self.n
        self.indices = (ukeys % self.n).astype(np.int32)
        self.indptr = np.searchsorted(r, np.arange(self.n + 1)).astype(np.int32)
        self._entry_rows = r
        self._n_cell_entries = C * nl * nl
        dr = np.zeros(self.n, dtype=bool)
        bnd = self.dofmap.boundary_dofs()
        dr[bnd] = True
        self._dir_row_entries = dr[r]
        self._dir_col_entries = dr[self.indices]
        self._diag_entries = r == self.indices

    # -- field evaluation ---------------------------------------------------

    def velocity_at_qp(self, x):
        """Velocity (C, nq, 2) and gradient (C, nq, 2, 2) at quadrature points."""
        nv = self.dofmap.n_vel
        U = np.asarray(x[:2 * nv]).reshape(2, nv)[:, self.dofmap.cell_vel]
        v = np.einsum("kca,qa->cqk", U, self.phi)
        G = np.einsum("kca,cqaj->cqkj", U, self.dphi)
        return v, G

    def pressure_at_qp(self, x):
        P = np.asarray(x)[self.dofmap.pres_offset:self.dofmap.mult_index]
        return np.einsum("cb,qb->cq", P[self.dofmap.cell_pres], self.psi)

    def scatter_vector(self, local):
        """Sum local cell vectors (C, nl) into a global vector."""
        return np.bincount(self.local_dofs.ravel(), weights=local.ravel(),
                           minlength=self.n)

    def scatter_matrix(self, local, mult_col, mult_row, mult_diag=0.0):
        data = np.bincount(
            self._scatter,
            weights=np.concatenate([local.ravel(), mult_col, mult_row, [mult_diag]]),
            minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()),
                             shape=(self.n, self.n))

    def zero_vector(self):
        return np.zeros(self.n)

    def interpolate(self, velocity=None, pressure=None):
        """Global vector from nodal interpolation of callables ``f(x)``."""
        x = self.zero_vector()
        dm = self.dofmap
        if velocity is not None:
            x[:2 * dm.n_vel] = dm.interpolate_velocity(velocity).ravel()
        if pressure is not None:
            x[dm.pres_offset:dm.mult_index] = dm.interpolate_pressure(pressure)
        return x


@dataclass
class StepState:
    """Coefficient vector at time level ``k``."""

    x: np.ndarray
    k: int
    t: float

    def velocity(self, dofmap):
        nv = dofmap.n_vel
        return self.x[:2 * nv].reshape(2, nv)

    def pressure(self, dofmap):
        return self.x[dofmap.pres_offset:dofmap.mult_index]

    def multiplier(self, dofmap):
        return self.x[dofmap.mult_index]


@dataclass
class StepProblem:
    """Everything one implicit Euler step needs besides the unknown.

    Attributes
    ----------
    p : ndarray (C,)
        Cellwise exponent at ``t_k``.
    f, F : ndarray
        Data at quadrature points, shapes (C, nq, 2) and (C, nq, 2, 2).
    bc : ndarray
        Values for the constrained DOFs (ordered as ``Discretization.boundary``).
    """

    disc: Discretization
    model: StressModel
    x_prev: np.ndarray
    p: np.ndarray
    f: np.ndarray
    F: np.ndarray
    tau: float
    bc: np.ndarray
    variant: str = "navier_stokes"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        n = self.disc.n
        if self.x_prev.shape != (n,):
            raise ValueError("previous state does not match the DOF map")


def _check(problem: StepProblem, x):
    if np.shape(x) != (problem.disc.n,):
        raise ValueError("state does not match the DOF map")


def _state_features(problem: StepProblem, x):
    d = problem.disc
    u = d.features_at_qp(x)
    up = d.features_at_qp(problem.x_prev)
    v, pi = u[..., 0:2], u[..., 6]
    G = u[..., 2:6].reshape(u.shape[:-1] + (2, 2))
    D = 0.5 * (G + np.swapaxes(G, -1, -2))
    p = np.broadcast_to(problem.p[:, None], pi.shape)
    return v, G, D, pi, p, up[..., 0:2]


def _flux(problem: StepProblem, x):
    """Pointwise residual features ``s`` (C, nq, 7) paired with test features."""
    v, G, D, pi, p, vp = _state_features(problem, x)
    m = (v - vp) / problem.tau - problem.f
    T = stress(p, D, problem.model) - problem.F
    T = T - pi[..., None, None] * np.eye(2)
    if problem.variant == "navier_stokes":
        m = m + 0.5 * np.einsum("cqkj,cqj->cqk", G, v)
        T = T - 0.5 * v[..., :, None] * v[..., None, :]
    s = np.empty(pi.shape + (NF,))
    s[..., 0:2] = m
    s[..., 2:6] = T.reshape(pi.shape + (4,))
    s[..., 6] = -(G[..., 0, 0] + G[..., 1, 1])
    return s, pi


def assemble_residual(problem: StepProblem, x) -> np.ndarray:
    """Nonlinear residual of the step at state ``x`` (boundary rows ``x - g``)."""
    _check(problem, x)
    d = problem.disc
    s, pi = _flux(problem, x)
    r = d.scatter_vector(d.test_integral(s))
    dm = d.dofmap
    r[dm.pres_offset:dm.mult_index] += x[dm.mult_index] * d.pressure_integrals
    r[dm.mult_index] = float(np.sum(d.weights * pi))
    r[d.boundary] = x[d.boundary] - problem.bc
    return r


def convective_residual(disc: Discretization, x) -> np.ndarray:
    """Global vector of ``c(v, v, z_i)`` over all velocity test functions."""
    u = disc.features_at_qp(x)
    v = u[..., 0:2]
    G = u[..., 2:6].reshape(u.shape[:-1] + (2, 2))
    s = np.zeros_like(u)
    s[..., 0:2] = 0.5 * np.einsum("cqkj,cqj->cqk", G, v)
    s[..., 2:6] = (-0.5 * v[..., :, None] * v[..., None, :]).reshape(u.shape[:-1] + (4,))
    return disc.scatter_vector(disc.test_integral(s))


def _tangent(problem: StepProblem, x):
    """Pointwise derivative ``ds/du`` (C, nq, 7, 7) of the residual features."""
    v, G, D, pi, p, _ = _state_features(problem, x)
    a, b, _, _ = stress_coefficients(p, D, problem.model)
    M = np.zeros(pi.shape + (NF, NF))
    M[..., 0, 0] = M[..., 1, 1] = 1.0 / problem.tau
    # d T_kj / d G_ln = a/2 (d_kl d_jn + d_kn d_jl) + b D_kj D_ln
    Dflat = D.reshape(pi.shape + (4,))
    M[..., 2:6, 2:6] = b[..., None, None] * Dflat[..., :, None] * Dflat[..., None, :]
    M[..., 2:6, 2:6] += a[..., None, None] * _ISYM_FLAT
    M[..., 2, 6] = M[..., 5, 6] = -1.0
    M[..., 6, 2] = M[..., 6, 5] = -1.0
    if problem.variant == "navier_stokes":
        M[..., 0:2, 0:2] += 0.5 * G
        for k in range(2):
            for j in range(2):
                # d m_k / d G_kj = v_j / 2
                M[..., k, 2 + 2 * k + j] += 0.5 * v[..., j]
                # d T_kj / d v_l = -(d_kl v_j + v_k d_jl) / 2
                M[..., 2 + 2 * k + j, k] -= 0.5 * v[..., j]
                M[..., 2 + 2 * k + j, j] -= 0.5 * v[..., k]
    return M


def assemble_jacobian(problem: StepProblem, x) -> sp.csr_matrix:
    """Exact derivative of :func:`assemble_residual` with respect to ``x``."""
    _check(problem, x)
    d = problem.disc
    local = d.bilinear(_tangent(problem, x))
    J = d.scatter_matrix(local, d.pressure_integrals, d.pressure_integrals)
    J.data[d._dir_row_entries] = 0.0
    J.data[d._dir_row_entries & d._diag_entries] = 1.0
    return J


def apply_constraints(J: sp.csr_matrix, rhs: np.ndarray, disc: Discretization):
    """Symmetric elimination of the boundary columns for the Newton update.

    ``J`` must already carry identity rows for the constrained DOFs (as
    returned by :func:`assemble_jacobian`).  The constrained update
    ``delta_b = rhs_b`` is moved to the right-hand side of the free rows.
    """
    rhs = np.array(rhs, dtype=float)
    fixed = np.zeros(disc.n)
    fixed[disc.boundary] = rhs[disc.boundary]
    if np.any(fixed):
        rhs -= J @ fixed
        rhs[disc.boundary] = fixed[disc.boundary]
    Je = J.copy()
    Je.data[disc._dir_col_entries & ~disc._diag_entries] = 0.0
    return Je, rhs


def mass_matrix(disc: Discretization) -> sp.csr_matrix:
    """Scalar velocity mass matrix (n_vel x n_vel)."""
    d = disc
    M = np.einsum("cq,qa,qb->cab", d.weights, d.phi, d.phi)
    cv = d.dofmap.cell_vel
    nl = cv.shape[1]
    rows = np.repeat(cv, nl, axis=1).ravel()
    cols = np.tile(cv, (1, nl)).ravel()
    return sp.csr_matrix((M.ravel(), (rows, cols)),
                         shape=(d.dofmap.n_vel, d.dofmap.n_vel))
