"""Hemispheroidal conformal parameterization ``f_C = P^-1 o psi^-1 o phi o g_C``."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .mesh import TriMesh, triangle_areas
from .optimize import SearchSpec, minimize_bounded
from .projection import inverse_spheroidal_projection
from .qc import (
    DirichletSolver,
    QCError,
    beltrami_triangles,
    count_flips,
    cotangent_laplacian,
    invert_pl_map,
    lbs_solve,
    local_frames,
    repair_folds,
    unfold_planar_map,
)
from .registration import Spheroid
from .tutte import disk_boundary, solve_tutte_disk

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MobiusParams:
    r: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not 0 <= self.r < 1:
            raise ValueError(f"Mobius magnitude must lie in [0, 1), got {self.r}")


@dataclass(frozen=True)
class ConformalResult:
    disk_initial: np.ndarray
    mobius: MobiusParams
    disk_corrected: np.ndarray
    hemi: np.ndarray
    residual_mu: dict


def mobius(z, p: MobiusParams) -> np.ndarray:
    """Disk automorphism ``(z - r e^{i theta}) / (1 - r e^{-i theta} z)`` on ``(N, 2)`` points."""
    z = np.asarray(z, dtype=np.float64)
    zc = z[..., 0] + 1j * z[..., 1]
    a = p.r * np.exp(1j * p.theta)
    w = (zc - a) / (1 - np.conj(a) * zc)
    return np.stack([w.real, w.imag], axis=-1)


# ------------------------------------------------------------ disk conformal map


def _boundary_energy_map(mesh: TriMesh, maxiter: int = 400):
    """Harmonic disk map whose circle boundary minimizes the Dirichlet energy.

    On the closed unit disk the Dirichlet energy is bounded below by the
    disk area, with equality exactly for conformal maps, so optimizing the
    boundary angles drives the cotangent-harmonic map towards a conformal
    one. Three boundary vertices stay at their arc-length angles; this
    removes the Mobius gauge freedom.
    """
    idx, pos = disk_boundary(mesh)
    nb = len(idx)
    theta0 = np.unwrap(np.arctan2(pos[:, 1], pos[:, 0]))
    theta0 = theta0 - theta0[-1] + 2 * np.pi
    k = cotangent_laplacian(mesh.vertices, mesh.faces)
    solver = DirichletSolver(k, idx)
    k_bb = k[idx][:, idx]
    k_bf = k[idx][:, solver.free]

    # Anchors split the loop into three arcs; the vertex gaps inside each
    # arc are a softmax of free parameters times the fixed arc span.
    anchors = np.unique(np.r_[np.searchsorted(theta0, [2 * np.pi / 3, 4 * np.pi / 3]), nb - 1])
    anchors = anchors[(anchors >= 1) & (anchors <= nb - 1)]
    bounds = np.r_[-1, anchors]
    arcs = [np.arange(bounds[j] + 1, bounds[j + 1] + 1) for j in range(len(bounds) - 1)]
    span = [theta0[a[-1]] - (theta0[a[0] - 1] if a[0] > 0 else 0.0) for a in arcs]
    gaps0 = np.diff(np.r_[0.0, theta0])

    def unpack(s):
        theta = np.empty(nb)
        out = []
        start = 0.0
        for a, L in zip(arcs, span):
            w = s[a] - s[a].max()
            p = np.exp(w)
            p /= p.sum()
            c = np.cumsum(p)
            theta[a] = start + L * c
            out.append((a, L, p, c))
            start += L
        return theta, out

    def energy(s):
        theta, parts = unpack(s)
        b = np.column_stack([np.cos(theta), np.sin(theta)])
        x = solver.solve(b)
        sb = k_bb @ b + k_bf @ x[solver.free]
        e = 0.5 * float(np.sum(b * sb))
        g_theta = -sb[:, 0] * np.sin(theta) + sb[:, 1] * np.cos(theta)
        grad = np.zeros(nb)
        for a, L, p, c in parts:
            g = g_theta[a]
            tail = np.cumsum(g[::-1])[::-1]  # sum_{k >= i} g_k
            grad[a] = L * p * (tail - np.dot(g, c))
        return e, grad

    s0 = np.log(np.maximum(gaps0, 1e-300))
    res = minimize(energy, s0, jac=True, method="L-BFGS-B", options={"maxiter": maxiter, "gtol": 1e-10, "ftol": 1e-13})
    theta, _ = unpack(res.x)
    b = np.column_stack([np.cos(theta), np.sin(theta)])
    disk = solver.solve(b)
    logger.debug("boundary energy: %.6f -> %.6f (pi = %.6f)", energy(s0)[0], res.fun, np.pi)
    return disk, idx


def disk_conformal(mesh: TriMesh) -> np.ndarray:
    """Fold-free conformal map of the mesh onto the unit disk."""
    disk, idx = _boundary_energy_map(mesh)
    if count_flips(disk, mesh.faces):
        disk = unfold_planar_map(solve_tutte_disk(mesh), disk, mesh.faces, idx)
    return disk


# ------------------------------------------------------------ Mobius area correction


def area_energy(disk_map, mesh: TriMesh, p: MobiusParams, s: Spheroid) -> float:
    """Mean squared log ratio of normalized face areas of ``P^-1 o phi o g`` against the mesh."""
    img = inverse_spheroidal_projection(mobius(disk_map, p), s)
    a_img = triangle_areas(img, mesh.faces)
    a_src = triangle_areas(mesh.vertices, mesh.faces)
    ok = (a_img > 0) & (a_src > 0)
    if not ok.all():
        logger.warning("area energy: skipping %d zero-area faces", int((~ok).sum()))
    d = np.log(a_img[ok] / a_img[ok].sum()) - np.log(a_src[ok] / a_src[ok].sum())
    return float(np.mean(d * d))


def optimize_mobius(disk_map, mesh: TriMesh, s: Spheroid, max_evals: int = 200) -> MobiusParams:
    """Bounded search over ``r in [0, 0.99]``, ``theta in [-pi, pi)``."""
    seeds = [np.array([r, t]) for r in (0.0, 0.25, 0.5) for t in (0.0, np.pi / 2, -np.pi / 2, -np.pi)]

    def objective(x):
        return area_energy(disk_map, mesh, MobiusParams(float(x[0]), float(x[1])), s)

    spec = SearchSpec(lower=np.array([0.0, -np.pi]), upper=np.array([0.99, np.pi]), max_evals=max_evals, tol=1e-4, seeds=seeds)
    best, value, _ = minimize_bounded(objective, spec)
    identity = objective(np.zeros(2))
    if not value <= identity:
        return MobiusParams()
    theta = float((best[1] + np.pi) % (2 * np.pi) - np.pi)
    return MobiusParams(float(best[0]), theta)


# ------------------------------------------------------------ quasi-conformal correction


def projection_beltrami(disk_map, faces, s: Spheroid) -> np.ndarray:
    """Beltrami coefficient of ``P^-1`` restricted to the disk triangles."""
    img = inverse_spheroidal_projection(disk_map, s)
    return beltrami_triangles(np.asarray(disk_map)[faces], local_frames(img, faces))


def qc_correction(disk_map, mesh: TriMesh, s: Spheroid) -> np.ndarray:
    """``psi^-1 o disk_map`` with ``psi = LBS(mu_{P^-1})`` fixing the unit circle."""
    disk_map = np.asarray(disk_map, dtype=np.float64)
    faces = mesh.faces
    idx, _ = disk_boundary(mesh)
    mu = projection_beltrami(disk_map, faces, s)
    psi = lbs_solve(mu, faces, disk_map, idx, disk_map[idx])
    if count_flips(psi, faces):
        logger.warning("quasi-conformal correction folded; repairing Beltrami coefficient")
        psi = lbs_solve(repair_folds(beltrami_triangles(disk_map[faces], psi[faces]), faces), faces, disk_map, idx, disk_map[idx])
    out = invert_pl_map(disk_map, psi, faces, disk_map)
    out[idx] = disk_map[idx]
    return out


def surface_beltrami(mesh: TriMesh, image3d) -> np.ndarray:
    """Beltrami coefficient of a surface-to-surface map, measured in local frames."""
    return beltrami_triangles(local_frames(mesh.vertices, mesh.faces), local_frames(image3d, mesh.faces))


def hemispheroidal_conformal(mesh: TriMesh, s: Spheroid) -> ConformalResult:
    try:
        g_c = disk_conformal(mesh)
    except QCError as exc:
        raise QCError(f"disk conformal map: {exc}") from None
    p = optimize_mobius(g_c, mesh, s)
    moved = mobius(g_c, p)
    try:
        corrected = qc_correction(moved, mesh, s)
    except QCError as exc:
        raise QCError(f"quasi-conformal correction: {exc}") from None
    if count_flips(corrected, mesh.faces):
        idx, _ = disk_boundary(mesh)
        corrected = unfold_planar_map(moved, corrected, mesh.faces, idx)
    hemi = inverse_spheroidal_projection(corrected, s)
    mu = np.abs(surface_beltrami(mesh, hemi))
    summary = {"mean": float(mu.mean()), "max": float(mu.max()), "median": float(np.median(mu))}
    return ConformalResult(g_c, p, corrected, hemi, summary)
