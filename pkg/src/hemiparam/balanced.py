"""Balanced hemispheroidal parameterization from a convex mix of Beltrami coefficients.

All three component maps are measured against the same Tutte disk ``g``:
``mu_X`` is the Beltrami coefficient of ``g(M) -> P(f_X(M))``. The mixed
coefficient is realized by the linear Beltrami solver on ``g(M)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .area import hemispheroidal_area_preserving
from .conformal import hemispheroidal_conformal
from .mesh import TriMesh
from .projection import inverse_spheroidal_projection, spheroidal_projection
from .qc import beltrami_from_planar_map, count_flips, folded, lbs_solve, repair_folds, unfold_planar_map
from .registration import Spheroid
from .tutte import disk_boundary, solve_tutte_disk

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class BalanceWeights:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        w = (self.alpha, self.beta, self.gamma)
        if any(not np.isfinite(x) or x < 0 for x in w):
            raise ValueError(f"weights must be nonnegative, got {w}")
        if abs(sum(w) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1, got {sum(w)!r}")

    @classmethod
    def from_two(cls, alpha: float, beta: float) -> "BalanceWeights":
        return cls(alpha, beta, 1.0 - alpha - beta)

    def as_tuple(self) -> tuple:
        return (self.alpha, self.beta, self.gamma)


@dataclass(frozen=True)
class BalancedComponents:
    """Cached component maps on the common Tutte disk ``g``."""

    g: np.ndarray
    boundary: np.ndarray
    disks: dict  # "T", "C", "A" -> pre-projection disk maps
    mus: dict
    angles: dict  # unwrapped boundary angles, aligned to the Tutte boundary


@dataclass(frozen=True)
class BalancedResult:
    disk: np.ndarray
    hemi: np.ndarray
    mu: np.ndarray
    weights: BalanceWeights


def component_beltrami(mesh: TriMesh, g, f_x, s: Spheroid) -> np.ndarray:
    """Beltrami coefficient of ``g(M) -> P(f_X(M))`` per face."""
    return beltrami_from_planar_map(g, spheroidal_projection(f_x, s), mesh.faces)


def mix_beltrami(mu_t, mu_c, mu_a, w: BalanceWeights, faces=None) -> np.ndarray:
    mu_t, mu_c, mu_a = (np.asarray(m, dtype=complex) for m in (mu_t, mu_c, mu_a))
    if not (mu_t.shape == mu_c.shape == mu_a.shape):
        raise ValueError("Beltrami fields must share the same faces")
    mu = w.alpha * mu_t + w.beta * mu_c + w.gamma * mu_a
    if np.any(folded(mu)):
        if faces is None:
            raise ValueError("mixed coefficient has |mu| >= 1 and no faces were given for repair")
        mu = repair_folds(mu, faces)
    return mu


def _unwrapped_angles(points, reference):
    theta = np.arctan2(points[:, 1], points[:, 0])
    return reference + np.angle(np.exp(1j * (theta - reference)))


def balanced_components(mesh: TriMesh, s: Spheroid) -> BalancedComponents:
    g = solve_tutte_disk(mesh)
    boundary, _ = disk_boundary(mesh)
    disks = {
        "T": g,
        "C": hemispheroidal_conformal(mesh, s).disk_corrected,
        "A": hemispheroidal_area_preserving(mesh, s).disk,
    }
    mus = {k: beltrami_from_planar_map(g, d, mesh.faces) for k, d in disks.items()}
    theta_t = np.unwrap(np.arctan2(g[boundary, 1], g[boundary, 0]))
    angles = {k: _unwrapped_angles(d[boundary], theta_t) for k, d in disks.items()}
    return BalancedComponents(g, boundary, disks, mus, angles)


def balanced_from_components(mesh: TriMesh, s: Spheroid, comp: BalancedComponents, w: BalanceWeights) -> BalancedResult:
    """Mix, solve LBS on the Tutte disk, and lift to the hemispheroid.

    Boundary angles are the same convex mix of the component boundary
    angles, so each pure weight reproduces its component's boundary.
    """
    mu = mix_beltrami(comp.mus["T"], comp.mus["C"], comp.mus["A"], w, mesh.faces)
    theta = w.alpha * comp.angles["T"] + w.beta * comp.angles["C"] + w.gamma * comp.angles["A"]
    bpos = np.column_stack([np.cos(theta), np.sin(theta)])
    disk = lbs_solve(mu, mesh.faces, comp.g, comp.boundary, bpos)
    if count_flips(disk, mesh.faces):
        disk = unfold_planar_map(comp.g, disk, mesh.faces, comp.boundary)
    return BalancedResult(disk, inverse_spheroidal_projection(disk, s), mu, w)


def hemispheroidal_balanced(mesh: TriMesh, s: Spheroid, w: BalanceWeights, components: BalancedComponents | None = None) -> BalancedResult:
    if components is None:
        components = balanced_components(mesh, s)
    return balanced_from_components(mesh, s, components, w)
