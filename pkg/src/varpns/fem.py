"""Reference elements, triangle quadrature and DOF maps for MINI / Taylor--Hood.

Global unknown layout (blocked, fixed)::

    [ u_x (n_vel) | u_y (n_vel) | pressure (n_pres) | multiplier (1) ]

where ``n_vel`` is the number of scalar velocity DOFs.  Scalar velocity DOFs
are vertices first, then edge midpoints (Taylor--Hood) or one bubble per cell
(MINI).  Pressure is continuous P1 on the vertices for both pairs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import Triangulation

__all__ = [
    "ElementKind",
    "ElementPair",
    "QuadratureRule",
    "DofMap",
    "ConfigurationError",
    "reference_basis",
    "quadrature_rule",
    "build_dof_map",
    "velocity_kinds",
]


class ConfigurationError(ValueError):
    """Unsupported discretization parameter."""


class ElementKind(enum.Enum):
    P0 = "P0"
    P1 = "P1"
    P2 = "P2"
    BUBBLE = "Bubble"


class ElementPair(enum.Enum):
    MINI = "mini"
    TAYLOR_HOOD = "taylor_hood"

    @classmethod
    def parse(cls, value) -> "ElementPair":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        if key in ("th", "taylorhood"):
            key = "taylor_hood"
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown element pair {value!r}") from None


def _barycentric(points):
    x, y = points[:, 0], points[:, 1]
    return np.stack([1.0 - x - y, x, y], axis=1)


# gradients of the barycentric coordinates w.r.t. reference coordinates
_DLAM = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def reference_basis(kind, points):
    """Values and reference gradients of a local basis.

    Parameters
    ----------
    kind : ElementKind or str
    points : array_like, shape (n, 2) or (2,)
        Points in the closed reference triangle {(0,0), (1,0), (0,1)}.

    Returns
    -------
    values : ndarray, shape (n, nloc)
    grads : ndarray, shape (n, nloc, 2)

    Local ordering: P1 by vertex; P2 vertices then midpoints of the edges
    opposite vertex 0, 1, 2.
    """
    kind = ElementKind(kind) if not isinstance(kind, ElementKind) else kind
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tol = 1e-12
    if (pts.min() < -tol) or np.any(pts.sum(axis=1) > 1.0 + tol):
        raise ValueError("point outside the reference triangle")
    lam = _barycentric(pts)
    n = len(pts)
    if kind is ElementKind.P0:
        return np.ones((n, 1)), np.zeros((n, 1, 2))
    if kind is ElementKind.P1:
        return lam, np.broadcast_to(_DLAM, (n, 3, 2)).copy()
    if kind is ElementKind.BUBBLE:
        l0, l1, l2 = lam.T
        val = 27.0 * l0 * l1 * l2
        grad = 27.0 * (np.outer(l1 * l2, _DLAM[0]) + np.outer(l0 * l2, _DLAM[1])
                       + np.outer(l0 * l1, _DLAM[2]))
        return val[:, None], grad[:, None, :]
    # P2
    values = np.empty((n, 6))
    grads = np.empty((n, 6, 2))
    for i in range(3):
        values[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        grads[:, i] = np.outer(4.0 * lam[:, i] - 1.0, _DLAM[i])
    for i, (j, k) in enumerate(((1, 2), (2, 0), (0, 1))):
        values[:, 3 + i] = 4.0 * lam[:, j] * lam[:, k]
        grads[:, 3 + i] = 4.0 * (np.outer(lam[:, k], _DLAM[j]) + np.outer(lam[:, j], _DLAM[k]))
    return values, grads


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle; weights sum to 1/2."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


# requested degree -> degree of the positive-weight rule actually used
_RULE_FOR_DEGREE = {1: 1, 2: 2, 3: 4, 4: 4, 5: 5, 6: 6, 7: 8, 8: 8, 9: 9, 10: 10}


@lru_cache(maxsize=None)
def quadrature_rule(degree: int) -> QuadratureRule:
    """Symmetric Gauss rule on the reference triangle exact to ``degree``.

    Degree 1 is the barycenter rule.  Degrees 3 and 7 are served by the next
    higher symmetric rule, since the classical 4- and 13-point rules carry a
    negative weight.
    """
    if degree not in _RULE_FOR_DEGREE:
        raise ConfigurationError(f"unsupported quadrature degree {degree}; use 1..10")
    if degree == 1:
        return QuadratureRule(np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5]), 1)
    from skfem.quadrature import get_quadrature
    from skfem.refdom import RefTri

    used = _RULE_FOR_DEGREE[degree]
    X, W = get_quadrature(RefTri, used)
    pts = np.ascontiguousarray(X.T, dtype=float)
    w = np.asarray(W, dtype=float)
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, used)


def velocity_kinds(pair: ElementPair) -> tuple[ElementKind, ...]:
    if pair is ElementPair.TAYLOR_HOOD:
        return (ElementKind.P2,)
    return (ElementKind.P1, ElementKind.BUBBLE)


def velocity_reference_basis(pair: ElementPair, points):
    """Local scalar velocity basis of the pair (values, reference gradients)."""
    parts = [reference_basis(k, points) for k in velocity_kinds(pair)]
    return (np.concatenate([p[0] for p in parts], axis=1),
            np.concatenate([p[1] for p in parts], axis=1))


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering for a mixed velocity--pressure space.

    Attributes
    ----------
    pair : ElementPair
    mesh : Triangulation
    n_vel : int
        Scalar velocity DOFs per component.
    n_pres : int
    cell_vel : ndarray, shape (C, nloc)
        Local-to-global scalar velocity DOFs.
    cell_pres : ndarray, shape (C, 3)
    boundary_vel : ndarray
        Sorted scalar velocity DOFs whose node lies on the boundary.
    nodes : ndarray, shape (n_vel, 2)
        Node coordinates (bubble DOFs sit at the barycenter).
    """

    pair: ElementPair
    mesh: Triangulation
    n_vel: int
    n_pres: int
    cell_vel: np.ndarray
    cell_pres: np.ndarray
    boundary_vel: np.ndarray
    nodes: np.ndarray

    @property
    def n_total(self) -> int:
        return 2 * self.n_vel + self.n_pres + 1

    @property
    def pres_offset(self) -> int:
        return 2 * self.n_vel

    @property
    def mult_index(self) -> int:
        return 2 * self.n_vel + self.n_pres

    def boundary_dofs(self) -> np.ndarray:
        """Global indices of constrained velocity unknowns (both components)."""
        b = self.boundary_vel
        return np.concatenate([b, b + self.n_vel])

    def split(self, x):
        """Views ``(ux, uy, pressure, multiplier)`` of a global vector."""
        nv, npr = self.n_vel, self.n_pres
        return x[:nv], x[nv:2 * nv], x[2 * nv:2 * nv + npr], x[2 * nv + npr]

    def interpolate_velocity(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(x) -> (n, 2)``; returns (2, n_vel).

        For MINI the bubble coefficient matches the value at the barycenter.
        """
        vals = np.asarray(func(self.nodes), dtype=float).reshape(-1, 2).T.copy()
        if self.pair is ElementPair.MINI:
            V = self.mesh.n_vertices
            p1_at_bary = vals[:, self.mesh.cells].mean(axis=2)
            vals[:, V:] -= p1_at_bary
        return vals

    def interpolate_pressure(self, func) -> np.ndarray:
        return np.asarray(func(self.mesh.vertices), dtype=float)


def build_dof_map(mesh: Triangulation, pair) -> DofMap:
    """Number DOFs of the MINI or Taylor--Hood pair on ``mesh``."""
    pair = ElementPair.parse(pair)
    V = mesh.n_vertices
    bverts = mesh.boundary_vertices()
    if pair is ElementPair.TAYLOR_HOOD:
        cell_vel = np.hstack([mesh.cells, V + mesh.cell_edges])
        mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        nodes = np.vstack([mesh.vertices, mid])
        bnd = np.concatenate([bverts, V + np.flatnonzero(mesh.boundary_edges)])
    else:
        cell_vel = np.hstack([mesh.cells, V + np.arange(mesh.n_cells)[:, None]])
        nodes = np.vstack([mesh.vertices, mesh.barycenters()])
        bnd = bverts
    for arr in (cell_vel, nodes):
        arr.setflags(write=False)
    bnd = np.sort(bnd)
    bnd.setflags(write=False)
    return DofMap(pair, mesh, len(nodes), V, cell_vel, mesh.cells, bnd, nodes)
