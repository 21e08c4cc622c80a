"""Quasi-conformal machinery shared by the parameterization methods.

Beltrami coefficients of piecewise-linear maps, the Linear Beltrami Solver,
sparse Dirichlet solves, inversion of planar PL maps and fold repair.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg, splu

from .mesh import face_adjacency, signed_areas_2d

logger = logging.getLogger(__name__)

MU_CAP = 0.95
DIRECT_SOLVE_LIMIT = 400_000


class QCError(RuntimeError):
    pass


# ------------------------------------------------------------ Beltrami


def local_frames(points3d: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Isometric flattening of each 3D triangle, ``(F, 3, 2)``.

    Vertex 0 at the origin, edge 0->1 along +x, vertex 2 in the upper half
    plane, so the flattened triangle keeps the face orientation.
    """
    p = np.asarray(points3d, dtype=np.float64)
    a, b, c = p[faces[:, 0]], p[faces[:, 1]], p[faces[:, 2]]
    e1 = b - a
    e2 = c - a
    l1 = np.linalg.norm(e1, axis=1)
    safe = np.where(l1 > 0, l1, 1.0)
    x2 = np.einsum("ij,ij->i", e2, e1) / safe
    y2 = np.linalg.norm(np.cross(e1, e2), axis=1) / safe
    out = np.zeros((len(faces), 3, 2))
    out[:, 1, 0] = l1
    out[:, 2, 0] = x2
    out[:, 2, 1] = y2
    return out


def _as_triangles(points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    if p.shape[1] == 3:
        return local_frames(p, faces)
    return p[faces]


def face_gradients(src_tri: np.ndarray):
    """Gradients of the three hat functions on each planar triangle.

    Returns ``(grads, signed_area)`` with ``grads`` of shape ``(F, 3, 2)``.
    """
    p0, p1, p2 = src_tri[:, 0], src_tri[:, 1], src_tri[:, 2]
    area = 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))
    g = np.empty(src_tri.shape)
    # grad of hat k = rot90(opposite edge) / (2 area)
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        e = src_tri[:, j] - src_tri[:, i]
        g[:, k, 0] = -e[:, 1]
        g[:, k, 1] = e[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        g /= (2.0 * area)[:, None, None]
    return g, area


def beltrami_triangles(src_tri: np.ndarray, tgt_tri: np.ndarray) -> np.ndarray:
    """Per-face Beltrami coefficient of the affine map ``src_tri -> tgt_tri``.

    Both arguments are ``(F, 3, 2)``. Faces where ``f_z = 0`` get ``inf``.
    """
    g, area = face_gradients(src_tri)
    if np.any(area == 0):
        bad = int(np.flatnonzero(area == 0)[0])
        raise QCError(f"degenerate source face {bad}")
    u = tgt_tri[:, :, 0]
    v = tgt_tri[:, :, 1]
    ux = np.einsum("fk,fk->f", u, g[:, :, 0])
    uy = np.einsum("fk,fk->f", u, g[:, :, 1])
    vx = np.einsum("fk,fk->f", v, g[:, :, 0])
    vy = np.einsum("fk,fk->f", v, g[:, :, 1])
    fz = 0.5 * ((ux + vy) + 1j * (vx - uy))
    fzbar = 0.5 * ((ux - vy) + 1j * (vx + uy))
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = fzbar / fz
    mu[fz == 0] = np.inf
    return mu


def beltrami_from_planar_map(source: np.ndarray, target: np.ndarray, faces: np.ndarray) -> np.ndarray:
    return beltrami_triangles(np.asarray(source, float)[faces], np.asarray(target, float)[faces])


def beltrami_from_surface_map(mesh, target: np.ndarray) -> np.ndarray:
    """Beltrami coefficient of a map from a 3D mesh to the plane (or to 3D)."""
    return beltrami_triangles(local_frames(mesh.vertices, mesh.faces), _as_triangles(target, mesh.faces))


def folded(mu: np.ndarray) -> np.ndarray:
    return ~(np.abs(mu) < 1)


# ------------------------------------------------------------ assembly


def stiffness_matrix(src_tri: np.ndarray, faces: np.ndarray, n_vertices: int, mu=None) -> sparse.csr_matrix:
    """P1 stiffness of ``div(A grad u)`` on the source triangles.

    With ``mu = None`` this is the cotangent Laplacian (positive
    semidefinite). Otherwise ``A`` is the Beltrami tensor of ``mu``.
    """
    g, area = face_gradients(src_tri)
    area = np.abs(area)
    if mu is None:
        a11 = a22 = np.ones(len(faces))
        a12 = np.zeros(len(faces))
    else:
        mu = np.asarray(mu)
        rho, tau = mu.real, mu.imag
        den = 1.0 - rho**2 - tau**2
        a11 = ((rho - 1) ** 2 + tau**2) / den
        a12 = -2.0 * tau / den
        a22 = ((1 + rho) ** 2 + tau**2) / den
    ag0 = a11[:, None] * g[:, :, 0] + a12[:, None] * g[:, :, 1]
    ag1 = a12[:, None] * g[:, :, 0] + a22[:, None] * g[:, :, 1]
    local = (np.einsum("fi,fj->fij", g[:, :, 0], ag0) + np.einsum("fi,fj->fij", g[:, :, 1], ag1)) * area[:, None, None]
    rows = np.repeat(faces, 3, axis=1).ravel()
    cols = np.tile(faces, (1, 3)).ravel()
    k = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n_vertices, n_vertices)).tocsr()
    k.sum_duplicates()
    return k


def cotangent_laplacian(points: np.ndarray, faces: np.ndarray) -> sparse.csr_matrix:
    """Positive semidefinite cotangent stiffness for 2D or 3D vertex positions."""
    return stiffness_matrix(_as_triangles(points, faces), faces, len(points))


def lumped_mass(points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    from .mesh import triangle_areas

    a = triangle_areas(points, faces)
    m = np.zeros(len(points))
    np.add.at(m, faces.ravel(), np.repeat(a / 3.0, 3))
    return m


class DirichletSolver:
    """Solve ``K x = 0`` on free rows with prescribed values on fixed rows.

    The free block is factorized once and reused for every right-hand side.
    """

    def __init__(self, k: sparse.spmatrix, fixed: np.ndarray):
        k = sparse.csr_matrix(k)
        n = k.shape[0]
        self.n = n
        self.fixed = np.asarray(fixed, dtype=np.int64)
        mask = np.ones(n, dtype=bool)
        mask[self.fixed] = False
        self.free = np.flatnonzero(mask)
        if len(self.free) and len(self.fixed) == 0:
            raise QCError("singular system: no constrained vertices")
        self.k_ff = k[self.free][:, self.free].tocsc()
        self.k_fb = k[self.free][:, self.fixed]
        self._lu = None
        if len(self.free):
            if len(self.free) <= DIRECT_SOLVE_LIMIT:
                try:
                    self._lu = splu(self.k_ff)
                except RuntimeError as exc:
                    raise QCError(f"singular system: {exc}") from None

    def solve(self, fixed_values: np.ndarray, rhs_free=None) -> np.ndarray:
        bv = np.asarray(fixed_values, dtype=np.float64)
        squeeze = bv.ndim == 1
        if squeeze:
            bv = bv[:, None]
        out = np.empty((self.n, bv.shape[1]))
        out[self.fixed] = bv
        if len(self.free) == 0:
            return out[:, 0] if squeeze else out
        rhs = -(self.k_fb @ bv)
        if rhs_free is not None:
            rhs = rhs + (rhs_free[:, None] if np.ndim(rhs_free) == 1 else rhs_free)
        if self._lu is not None:
            x = self._lu.solve(rhs)
        else:
            x = np.empty_like(rhs)
            for j in range(rhs.shape[1]):
                x[:, j], info = cg(self.k_ff, rhs[:, j], rtol=1e-10, maxiter=10 * self.n)
                if info != 0:
                    raise QCError("conjugate gradient did not converge")
        if not np.all(np.isfinite(x)):
            raise QCError("singular system: non-finite solution")
        resid = np.abs(self.k_ff @ x - rhs).max()
        scale = max(np.abs(rhs).max(), np.abs(self.k_ff).max() * np.abs(x).max(), 1e-300)
        if resid > 1e-8 * scale:
            raise QCError(f"linear solve residual too large ({resid:.3g})")
        out[self.free] = x
        return out[:, 0] if squeeze else out


# ------------------------------------------------------------ LBS


def lbs_solve(mu, faces, source, boundary_idx, boundary_pos) -> np.ndarray:
    """Linear Beltrami Solver: planar map with Beltrami ``mu`` and given boundary values."""
    mu = np.asarray(mu, dtype=complex)
    if np.any(folded(mu)):
        raise QCError("Beltrami coefficient with |mu| >= 1; repair folds first")
    src = np.asarray(source, dtype=np.float64)[:, :2]
    k = stiffness_matrix(src[faces], faces, len(src), mu)
    return DirichletSolver(k, boundary_idx).solve(np.asarray(boundary_pos, dtype=np.float64))


def repair_folds(mu, faces, cap: float = MU_CAP) -> np.ndarray:
    """Replace folded-face coefficients by the mean of non-folded neighbours, then cap the modulus."""
    mu = np.array(mu, dtype=complex)
    bad = folded(mu)
    if bad.any():
        adj = face_adjacency(np.asarray(faces))
        adj = np.concatenate([adj, adj[:, ::-1]])
        good_nb = ~bad[adj[:, 1]]
        sel = adj[bad[adj[:, 0]] & good_nb]
        total = np.zeros(len(mu), dtype=complex)
        count = np.zeros(len(mu))
        np.add.at(total, sel[:, 0], mu[sel[:, 1]])
        np.add.at(count, sel[:, 0], 1)
        mu[bad] = np.where(count[bad] > 0, total[bad] / np.maximum(count[bad], 1), 0)
    mod = np.abs(mu)
    over = mod > cap
    mu[over] *= cap / mod[over]
    return mu


def count_flips(points2d: np.ndarray, faces: np.ndarray) -> int:
    return int(np.count_nonzero(signed_areas_2d(points2d, faces) <= 0))


def unfold_planar_map(source, target, faces, boundary_idx, max_rounds: int = 5) -> np.ndarray:
    """Remove fold-overs of a disk map by solving LBS with repaired Beltrami coefficients.

    ``source`` must be a fold-free planar map of the same mesh; the boundary
    of ``target`` is kept.
    """
    out = np.asarray(target, dtype=np.float64)
    for _ in range(max_rounds):
        if count_flips(out, faces) == 0:
            return out
        mu = repair_folds(beltrami_from_planar_map(source, out, faces), faces)
        out = lbs_solve(mu, faces, source, boundary_idx, out[boundary_idx])
    nflip = count_flips(out, faces)
    if nflip:
        logger.warning("%d folded faces remain after repair", nflip)
    return out


# ------------------------------------------------------------ PL inversion


class PointLocator:
    """Uniform-grid bucketing of planar triangles for point location."""

    def __init__(self, points: np.ndarray, faces: np.ndarray):
        self.points = np.asarray(points, dtype=np.float64)
        self.faces = np.asarray(faces)
        tri = self.points[self.faces]
        lo = tri.min(axis=1)
        hi = tri.max(axis=1)
        self.origin = lo.min(axis=0)
        span = np.maximum(hi.max(axis=0) - self.origin, 1e-300)
        n = max(1, int(np.ceil(np.sqrt(len(self.faces)))))
        self.n = n
        self.cell = span / n * (1 + 1e-12)
        i0 = self._cell_index(lo)
        i1 = self._cell_index(hi)
        nx = i1[:, 0] - i0[:, 0] + 1
        ny = i1[:, 1] - i0[:, 1] + 1
        counts = nx * ny
        tri_id = np.repeat(np.arange(len(self.faces)), counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        cx = i0[tri_id, 0] + offs % nx[tri_id]
        cy = i0[tri_id, 1] + offs // nx[tri_id]
        cid = cx * n + cy
        order = np.argsort(cid, kind="stable")
        self.cell_tris = tri_id[order]
        self.cell_start = np.searchsorted(cid[order], np.arange(n * n + 1))
        self._grad, _ = face_gradients(tri)
        self._tri0 = tri

    def _cell_index(self, p):
        idx = np.floor((p - self.origin) / self.cell).astype(np.int64)
        return np.clip(idx, 0, self.n - 1)

    def locate(self, q: np.ndarray, tol: float = 1e-10):
        """Return ``(face, barycentric)`` per query; face is -1 when outside."""
        q = np.atleast_2d(np.asarray(q, dtype=np.float64))
        ci = self._cell_index(q)
        cid = ci[:, 0] * self.n + ci[:, 1]
        start = self.cell_start[cid]
        counts = self.cell_start[cid + 1] - start
        qid = np.repeat(np.arange(len(q)), counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        tid = self.cell_tris[start[qid] + offs]
        bary = self._bary(tid, q[qid])
        inside = bary.min(axis=1) >= -tol
        face = np.full(len(q), -1, dtype=np.int64)
        score = bary.min(axis=1)
        # keep, per query, the candidate with the largest minimum coordinate
        order = np.lexsort((score, qid))
        last = np.r_[qid[order][1:] != qid[order][:-1], True] if len(order) else np.array([], bool)
        pick = order[last]
        ok = inside[pick]
        face[qid[pick[ok]]] = tid[pick[ok]]
        out_b = np.zeros((len(q), 3))
        out_b[qid[pick[ok]]] = bary[pick[ok]]
        return face, out_b

    def _bary(self, tid, q):
        g = self._grad[tid]
        p0 = self._tri0[tid, 0]
        d = q - p0
        b1 = np.einsum("ij,ij->i", g[:, 1], d)
        b2 = np.einsum("ij,ij->i", g[:, 2], d)
        return np.column_stack([1 - b1 - b2, b1, b2])


def _closest_on_boundary(image, source, bd_edges, q):
    a = image[bd_edges[:, 0]]
    b = image[bd_edges[:, 1]]
    ab = b - a
    den = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300)
    out = np.empty((len(q), source.shape[1]))
    for i, p in enumerate(q):
        t = np.clip(((p - a) * ab).sum(axis=1) / den, 0, 1)
        d = np.linalg.norm(a + t[:, None] * ab - p, axis=1)
        k = int(np.argmin(d))
        out[i] = (1 - t[k]) * source[bd_edges[k, 0]] + t[k] * source[bd_edges[k, 1]]
    return out


def invert_pl_map(source, image, faces, queries) -> np.ndarray:
    """Pre-images under the PL map taking ``source`` vertex positions to ``image``."""
    source = np.asarray(source, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    faces = np.asarray(faces)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    loc = PointLocator(image, faces)
    face, bary = loc.locate(queries)
    out = np.einsum("qk,qkd->qd", bary, source[faces[np.maximum(face, 0)]])
    miss = face < 0
    if miss.any():
        logger.warning("%d query points outside the map image; projecting to boundary", int(miss.sum()))
        from .mesh import _boundary_cycles

        (cyc,) = _boundary_cycles(faces, len(image))
        edges = np.column_stack([cyc, np.roll(cyc, -1)])
        out[miss] = _closest_on_boundary(image, source, edges, queries[miss])
    return out
