"""Hemispheroidal area-preserving parameterization by density equalization on the disk."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .conformal import optimize_mobius, mobius
from .mesh import TriMesh, triangle_areas, vertex_face_incidence
from .projection import inverse_spheroidal_projection
from .qc import QCError, count_flips, face_gradients, lumped_mass, stiffness_matrix, unfold_planar_map
from .registration import Spheroid
from .tutte import disk_boundary, solve_tutte_disk

logger = logging.getLogger(__name__)

CV_TARGET = 0.05
MAX_ITERATIONS = 200
STALL_WINDOW = 5
STALL_TOL = 1e-4
MAX_HALVINGS = 5
DEFAULT_STEP = 0.1


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class DemState:
    disk: np.ndarray
    density: np.ndarray
    iteration: int = 0
    step: float = DEFAULT_STEP


@dataclass(frozen=True)
class AreaResult:
    disk_initial: np.ndarray
    disk: np.ndarray
    hemi: np.ndarray
    iterations: int
    cv_history: list


def density_rho_H(mesh: TriMesh, disk, s: Spheroid) -> np.ndarray:
    """Mesh face area over the area of the face's current image on the hemispheroid."""
    img = triangle_areas(inverse_spheroidal_projection(disk, s), mesh.faces)
    bad = np.flatnonzero(~(img > 0))
    if len(bad):
        raise DensityError(f"face {bad[0]} has zero area on the hemispheroid")
    return triangle_areas(mesh.vertices, mesh.faces) / img


def coefficient_of_variation(rho: np.ndarray) -> float:
    return float(np.std(rho) / np.mean(rho))


def _vertex_average(faces, nv, face_values, weights):
    inc = vertex_face_incidence(faces, nv)  # (nv, F)
    num = inc @ (face_values * weights[:, None] if face_values.ndim == 2 else face_values * weights)
    den = inc @ weights
    return num / (den[:, None] if face_values.ndim == 2 else den)


def _diffused_vertex_density(state: DemState, faces, nv):
    areas = triangle_areas(state.disk, faces)
    rho_v = _vertex_average(faces, nv, state.density, areas)
    k = stiffness_matrix(state.disk[faces], faces, nv)
    m = sparse.diags(lumped_mass(state.disk, faces))
    return splu((m + state.step * k).tocsc()).solve(m @ rho_v)


def _velocity(disk, faces, rho_v, boundary):
    g, area = face_gradients(disk[faces])
    grad_f = np.einsum("fk,fkd->fd", rho_v[faces], g)
    grad_v = _vertex_average(faces, len(disk), grad_f, np.abs(area))
    v = -grad_v / rho_v[:, None]
    b = disk[boundary]
    tangent = np.column_stack([-b[:, 1], b[:, 0]])
    v[boundary] = np.sum(v[boundary] * tangent, axis=1)[:, None] * tangent
    return v


def dem_step(state: DemState, mesh: TriMesh, s: Spheroid, boundary=None) -> DemState:
    """Diffuse the vertex density, move vertices along ``-grad(rho)/rho``, recompute ``rho_H``.

    Halves the step (at most five times) when the update folds a face.
    """
    faces = mesh.faces
    nv = mesh.n_vertices
    if boundary is None:
        boundary, _ = disk_boundary(mesh)
    rho_v = _diffused_vertex_density(state, faces, nv)
    if not np.all(np.isfinite(rho_v)) or np.any(rho_v <= 0):
        raise QCError("density diffusion produced non-positive or non-finite values")
    v = _velocity(state.disk, faces, rho_v, boundary)
    step = state.step
    for _ in range(MAX_HALVINGS + 1):
        new = state.disk + step * v
        b = new[boundary]
        new[boundary] = b / np.linalg.norm(b, axis=1, keepdims=True)
        if np.all(np.isfinite(new)) and count_flips(new, faces) == 0:
            return DemState(new, density_rho_H(mesh, new, s), state.iteration + 1, step)
        step *= 0.5
    raise QCError("density step folds the disk even after step halving")


def _write_log(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "cv_rho", "flipped"])
        w.writerows(rows)


def hemispheroidal_area_preserving(
    mesh: TriMesh,
    s: Spheroid,
    step: float = DEFAULT_STEP,
    max_iterations: int = MAX_ITERATIONS,
    log_path=None,
) -> AreaResult:
    """Tutte disk map, Mobius area correction, density equalization, ``P^-1``."""
    g = solve_tutte_disk(mesh)
    p = optimize_mobius(g, mesh, s)
    disk0 = mobius(g, p)
    boundary, _ = disk_boundary(mesh)
    state = DemState(disk0, density_rho_H(mesh, disk0, s), 0, step)
    cv = [coefficient_of_variation(state.density)]
    best = (cv[0], state.disk)
    rows = [(0, cv[0], 0)]
    while cv[-1] >= CV_TARGET and state.iteration < max_iterations:
        try:
            state = dem_step(state, mesh, s, boundary)
        except QCError as exc:
            logger.warning("stopping density iteration: %s", exc)
            break
        # Keep the nominal step for the next iteration after a halving.
        state = replace(state, step=step)
        cv.append(coefficient_of_variation(state.density))
        rows.append((state.iteration, cv[-1], 0))
        if cv[-1] < best[0]:
            best = (cv[-1], state.disk)
        if len(cv) > STALL_WINDOW and cv[-1 - STALL_WINDOW] - cv[-1] < STALL_TOL * cv[-1 - STALL_WINDOW]:
            break
    if cv[-1] >= CV_TARGET:
        logger.warning("density iteration stopped at CV %.3g (target %.3g)", best[0], CV_TARGET)
    disk = best[1]
    if count_flips(disk, mesh.faces):
        disk = unfold_planar_map(g, disk, mesh.faces, boundary)
    if log_path is not None:
        _write_log(log_path, rows)
    return AreaResult(disk0, disk, inverse_spheroidal_projection(disk, s), len(cv) - 1, cv)
