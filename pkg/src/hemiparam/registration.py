"""Canonical placement of an open surface and sizing of the target hemispheroid."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .mesh import DegenerateGeometryError, TriMesh, boundary_loop

logger = logging.getLogger(__name__)

C_MIN = 0.05
SPHERE_PERTURBATION = 1e-9


@dataclass(frozen=True)
class Spheroid:
    """Hemispheroid ``(x^2 + y^2)/a^2 + z^2/c^2 = 1, z >= 0``.

    ``a == c`` is nudged to a slightly prolate shape so the focal distance
    never vanishes.
    """

    a: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        a, c = float(self.a), float(self.c)
        if not (a > 0 and c > 0 and np.isfinite(a) and np.isfinite(c)):
            raise ValueError(f"semiaxes must be positive, got a={a}, c={c}")
        if a == c:
            c = c * (1 + SPHERE_PERTURBATION)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)

    @property
    def aspect_ratio(self) -> float:
        return self.a / self.c

    @property
    def kind(self) -> str:
        return "oblate" if self.aspect_ratio > 1 else "prolate"

    @property
    def e(self) -> float:
        """Focal distance."""
        return float(np.sqrt(abs(self.a**2 - self.c**2)))

    @property
    def zeta(self) -> float:
        """Confocal shell parameter: tanh(zeta) = c/a (oblate) or a/c (prolate)."""
        if self.kind == "oblate":
            return float(np.arctanh(self.c / self.a))
        return float(np.arctanh(self.a / self.c))

    def to_dict(self) -> dict:
        return {"a": self.a, "c": self.c, "kind": self.kind}


@dataclass(frozen=True)
class RigidTransform:
    """``x -> rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self`` after ``other``."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def to_dict(self) -> dict:
        return {
            "rotation": [float(x) for x in self.rotation.ravel()],
            "translation": [float(x) for x in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls(np.array(d["rotation"], dtype=float).reshape(3, 3), np.array(d["translation"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def fit_boundary_plane(loop_points, interior_reference=None):
    """Least-squares plane through boundary points.

    Returns ``(normal, centroid)``. The normal is flipped so that
    ``interior_reference`` (typically the mesh centroid) has a nonnegative
    offset from the plane.
    """
    p = np.asarray(loop_points, dtype=np.float64)
    if len(p) < 3:
        raise DegenerateGeometryError("need at least 3 boundary points to fit a plane")
    centroid = p.mean(axis=0)
    _, s, vt = np.linalg.svd(p - centroid, full_matrices=False)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateGeometryError("boundary points are collinear")
    normal = vt[2]
    if interior_reference is not None and np.dot(np.asarray(interior_reference) - centroid, normal) < 0:
        normal = -normal
    return normal, centroid


def _rotation_to_z(n: np.ndarray) -> np.ndarray:
    """Smallest rotation taking unit vector ``n`` to +z."""
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(n, z)
    s = np.linalg.norm(v)
    cos = float(np.dot(n, z))
    if s < 1e-15:
        if cos > 0:
            return np.eye(3)
        return np.diag([1.0, -1.0, -1.0])
    k = v / s
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + s * kx + (1 - cos) * (kx @ kx)


def register(mesh: TriMesh) -> tuple[TriMesh, RigidTransform]:
    """Center the mesh and rotate its boundary plane onto XY, bulk upward."""
    v = mesh.vertices
    centroid = v.mean(axis=0)
    loop = boundary_loop(mesh)
    normal, _ = fit_boundary_plane(v[loop.indices], interior_reference=centroid)
    rot = _rotation_to_z(normal)
    # Snap an already-aligned mesh to the exact identity.
    if np.abs(rot - np.eye(3)).max() < 1e-13:
        rot = np.eye(3)
    transform = RigidTransform(rot, -rot @ centroid)
    out = transform.apply(v)
    bz = out[loop.indices, 2].mean()
    if out[:, 2].mean() < bz:
        flip = RigidTransform(np.diag([1.0, -1.0, -1.0]), np.zeros(3))
        transform = flip.compose(transform)
        out = transform.apply(v)
    return mesh.with_vertices(out), transform


def size_hemispheroid(registered: TriMesh) -> Spheroid:
    """Hemispheroid with ``a = 1`` and ``c`` the normalized bounding-box height."""
    v = registered.vertices
    ext = v.max(axis=0) - v.min(axis=0)
    horizontal = max(ext[0], ext[1])
    if horizontal <= 0:
        raise DegenerateGeometryError("mesh has zero horizontal extent")
    c = 2.0 * ext[2] / horizontal
    if c < C_MIN:
        logger.warning("surface is nearly flat (c=%.3g); flooring c at %.2f", c, C_MIN)
        c = C_MIN
    return Spheroid(1.0, c)
