"""Hemispheroidal Tutte parameterization: graph-Laplacian disk map, then P^-1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .mesh import BoundaryLoop, TriMesh, boundary_loop
from .projection import inverse_spheroidal_projection
from .qc import DirichletSolver, QCError, count_flips
from .registration import Spheroid


@dataclass(frozen=True)
class TutteResult:
    disk: np.ndarray
    hemi: np.ndarray


def graph_laplacian(mesh: TriMesh) -> sparse.csr_matrix:
    """``L_ij = 1`` on edges, ``L_ii = -deg(i)``."""
    e = mesh.edges()
    n = mesh.n_vertices
    adj = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    adj = (adj + adj.T).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return (adj - sparse.diags(deg)).tocsr()


def boundary_arc_positions(loop: BoundaryLoop) -> np.ndarray:
    """Unit-circle targets spaced like the boundary edges.

    Vertex ``j`` of the loop sits at angle ``2 pi * (l_1 + ... + l_j) / L``,
    so the last loop vertex lands on ``1 + 0i``.
    """
    lengths = np.asarray(loop.edge_lengths, dtype=np.float64)
    total = lengths.sum()
    if not total > 0:
        raise ValueError("boundary has zero total length")
    theta = 2 * np.pi * np.cumsum(lengths) / total
    return np.column_stack([np.cos(theta), np.sin(theta)])


def disk_boundary(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Boundary indices (lowest index last) and their arc-length circle positions."""
    loop = boundary_loop(mesh)
    idx = np.roll(loop.indices, -1)
    rolled = BoundaryLoop(idx, np.roll(loop.edge_lengths, -1))
    return idx, boundary_arc_positions(rolled)


def solve_tutte_disk(mesh: TriMesh) -> np.ndarray:
    idx, pos = disk_boundary(mesh)
    lap = -graph_laplacian(mesh)
    disk = DirichletSolver(lap, idx).solve(pos)
    if count_flips(disk, mesh.faces):
        raise QCError("Tutte embedding produced folded faces")
    return disk


def hemispheroidal_tutte(mesh: TriMesh, s: Spheroid) -> TutteResult:
    disk = solve_tutte_disk(mesh)
    return TutteResult(disk, inverse_spheroidal_projection(disk, s))
