"""Structured triangulations of the unit square with uniform red refinement.

Vertex, edge and cell numbering is deterministic:

* edges are numbered by lexicographic order of their sorted vertex pair;
* the midpoint of edge ``e`` of a parent mesh becomes vertex ``V + e`` of the
  child mesh;
* each parent cell ``(v0, v1, v2)`` is replaced by the children
  ``(v0, m2, m1)``, ``(m2, v1, m0)``, ``(m1, m0, v2)``, ``(m0, m1, m2)``
  where ``mi`` is the midpoint of the edge opposite ``vi``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Triangulation",
    "unit_square_initial",
    "refine",
    "refine_to",
    "cell_geometry",
    "write_vtk",
]

# local edge i is opposite local vertex i
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Conforming triangle mesh.

    Attributes
    ----------
    vertices : ndarray, shape (V, 2)
    cells : ndarray, shape (C, 3)
        Counterclockwise vertex triples.
    edges : ndarray, shape (E, 2)
        Sorted vertex pairs.
    boundary_edges : ndarray of bool, shape (E,)
    cell_edges : ndarray, shape (C, 3)
        Global index of the edge opposite each local vertex.
    level : int
    h : float
        Maximal cell diameter.
    parent : ndarray or None
        Parent cell of every cell (``None`` on the initial mesh).
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    boundary_edges: np.ndarray
    cell_edges: np.ndarray
    level: int
    h: float
    parent: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("vertices", "cells", "edges", "boundary_edges", "cell_edges"):
            getattr(self, name).setflags(write=False)
        if self.parent is not None:
            self.parent.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def cell_areas(self) -> np.ndarray:
        """Signed areas (positive for counterclockwise cells)."""
        p = self.vertices[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def barycenters(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    def affine_maps(self) -> tuple[np.ndarray, np.ndarray]:
        """Jacobians ``B`` (C, 2, 2) and offsets ``b`` (C, 2) with ``x = B xi + b``."""
        p = self.vertices[self.cells]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        return B, p[:, 0].copy()

    def boundary_vertices(self) -> np.ndarray:
        """Sorted indices of vertices lying on a boundary edge."""
        return np.unique(self.edges[self.boundary_edges])

    def edge_cell_counts(self) -> np.ndarray:
        return np.bincount(self.cell_edges.ravel(), minlength=self.n_edges)


def _build_edges(cells: np.ndarray):
    local = cells[:, LOCAL_EDGES]  # (C, 3, 2)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(
        pairs, axis=0, return_inverse=True, return_counts=True)
    cell_edges = inverse.reshape(-1, 3)
    return edges, counts == 1, cell_edges


def _diameter(vertices: np.ndarray, edges: np.ndarray) -> float:
    d = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    return float(np.sqrt((d ** 2).sum(axis=1)).max())


def unit_square_initial() -> Triangulation:
    """Four-triangle mesh of (0,1)^2 obtained by cutting along both diagonals."""
    vertices = np.array(
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    cells = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    edges, bnd, cell_edges = _build_edges(cells)
    return Triangulation(vertices, cells, edges, bnd, cell_edges,
                         level=0, h=_diameter(vertices, edges))


def refine(mesh: Triangulation) -> Triangulation:
    """Red refinement: split every triangle into four congruent children."""
    V = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])
    v0, v1, v2 = mesh.cells.T
    m0, m1, m2 = (V + mesh.cell_edges).T
    children = np.stack([
        np.stack([v0, m2, m1], axis=1),
        np.stack([m2, v1, m0], axis=1),
        np.stack([m1, m0, v2], axis=1),
        np.stack([m0, m1, m2], axis=1),
    ], axis=1)  # (C, 4, 3)
    cells = children.reshape(-1, 3)
    parent = np.repeat(np.arange(mesh.n_cells), 4)
    edges, bnd, cell_edges = _build_edges(cells)
    return Triangulation(vertices, cells, edges, bnd, cell_edges,
                         level=mesh.level + 1, h=_diameter(vertices, edges),
                         parent=parent)


def refine_to(level: int) -> Triangulation:
    """Initial mesh refined ``level`` times."""
    mesh = unit_square_initial()
    for _ in range(level):
        mesh = refine(mesh)
    return mesh


def cell_geometry(mesh: Triangulation, cell_id: int):
    """Barycenter, area, affine map ``(B, b)`` and diameter of one cell.

    The affine map sends the reference triangle {(0,0), (1,0), (0,1)} onto
    the cell via ``x = B @ xi + b``.
    """
    tri = mesh.vertices[mesh.cells[cell_id]]
    B = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    area = 0.5 * abs(np.linalg.det(B))
    diam = max(np.linalg.norm(tri[i] - tri[j]) for i, j in LOCAL_EDGES)
    return tri.mean(axis=0), area, (B, tri[0].copy()), float(diam)


def write_vtk(mesh: Triangulation, path, cell_data: dict | None = None) -> None:
    """Write the mesh as a legacy ASCII VTK unstructured grid (debugging aid)."""
    lines = ["# vtk DataFile Version 3.0", f"varpns mesh level {mesh.level}",
             "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.n_cells} {4 * mesh.n_cells}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += ["5"] * mesh.n_cells
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_cells}")
        for name, values in cell_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in np.asarray(values, dtype=float)]
    Path(path).write_text("\n".join(lines) + "\n")
