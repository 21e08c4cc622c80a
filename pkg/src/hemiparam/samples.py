"""Deterministic synthetic open surfaces used as bundled test meshes.

Every surface is the image of a ring-structured triangulation of the unit
disk under an explicit embedding, so resolution is controlled by the ring
count and refinement by 1-to-4 subdivision.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay

from .mesh import TriMesh

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def disk_points(n_rings: int) -> np.ndarray:
    """Centre plus ``n_rings`` concentric rings of ``6k`` points each."""
    pts = [np.zeros((1, 2))]
    for k in range(1, n_rings + 1):
        t = 2 * np.pi * (np.arange(6 * k) + (k * GOLDEN) % 1.0) / (6 * k)
        pts.append(k / n_rings * np.column_stack([np.cos(t), np.sin(t)]))
    return np.concatenate(pts)


def disk_mesh2d(n_rings: int) -> tuple[np.ndarray, np.ndarray]:
    uv = disk_points(n_rings)
    faces = Delaunay(uv).simplices.astype(np.int64)
    e1 = uv[faces[:, 1]] - uv[faces[:, 0]]
    e2 = uv[faces[:, 2]] - uv[faces[:, 0]]
    flip = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    faces[flip] = faces[flip][:, ::-1]
    return uv, faces


def subdivide(uv: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """1-to-4 midpoint subdivision of a planar triangulation.

    Boundary midpoints are pushed back onto the unit circle so the domain
    stays the disk.
    """
    nv = len(uv)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    key = np.minimum(e[:, 0], e[:, 1]) * nv + np.maximum(e[:, 0], e[:, 1])
    uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    a, b = uniq // nv, uniq % nv
    mid = 0.5 * (uv[a] + uv[b])
    bd = counts == 1
    mid[bd] /= np.linalg.norm(mid[bd], axis=1, keepdims=True)
    m = nv + inv.reshape(3, -1).T  # midpoint of edges (01, 12, 20)
    f0, f1, f2 = faces[:, 0], faces[:, 1], faces[:, 2]
    new = np.concatenate(
        [
            np.column_stack([f0, m[:, 0], m[:, 2]]),
            np.column_stack([m[:, 0], f1, m[:, 1]]),
            np.column_stack([m[:, 2], m[:, 1], f2]),
            np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
        ]
    )
    return np.concatenate([uv, mid]), new


def _polar(uv):
    r = np.hypot(uv[:, 0], uv[:, 1])
    return r, np.arctan2(uv[:, 1], uv[:, 0])


def _embed_cap(uv, c=1.0, radial=None):
    # Azimuthal-equidistant lift of the disk onto a cap of unit radius.
    r, ph = _polar(uv)
    th = r * np.pi / 2
    rad = np.ones_like(r) if radial is None else radial(th, ph)
    return np.column_stack([rad * np.sin(th) * np.cos(ph), rad * np.sin(th) * np.sin(ph), c * rad * np.cos(th)])


def hemisphere(uv):
    return _embed_cap(uv)


def half_ellipsoid(c0):
    def embed(uv):
        return _embed_cap(uv, c=c0)

    return embed


def face(uv):
    x, y = uv[:, 0], uv[:, 1]
    r2 = np.minimum(x * x + y * y, 1.0)
    z = 0.45 * (1 - r2) ** 0.7
    z = z + 0.22 * np.exp(-((x / 0.12) ** 2 + ((y + 0.05) / 0.3) ** 2))  # nose
    z = z - 0.07 * np.exp(-(((x - 0.3) / 0.13) ** 2 + ((y - 0.22) / 0.09) ** 2))
    z = z - 0.07 * np.exp(-(((x + 0.3) / 0.13) ** 2 + ((y - 0.22) / 0.09) ** 2))
    z = z + 0.05 * np.exp(-((x / 0.25) ** 2 + ((y + 0.45) / 0.06) ** 2))  # lips
    return np.column_stack([x, 1.2 * y, z])


def mountain(uv):
    x, y = uv[:, 0], uv[:, 1]
    peak = np.exp(-((x - 0.08) ** 2 + (y + 0.05) ** 2) / 0.09)
    ridge = 0.25 * np.exp(-((x + 0.4 * y) ** 2) / 0.02) * (1 - x * x - y * y)
    z = 0.9 * peak + ridge + 0.04 * np.sin(5 * x) * np.cos(4 * y) * (1 - x * x - y * y)
    return np.column_stack([x, y, z])


def bunny_like(uv):
    def radial(th, ph):
        ear1 = 0.35 * np.exp(-(((th - 0.35) / 0.12) ** 2 + ((ph - 0.6) / 0.35) ** 2))
        ear2 = 0.3 * np.exp(-(((th - 0.4) / 0.12) ** 2 + ((ph + 0.9) / 0.35) ** 2))
        return 1 + ear1 + ear2 + 0.08 * np.sin(3 * ph) * np.sin(2 * th)

    return _embed_cap(uv, c=1.4, radial=radial)


def brain_like(uv):
    def radial(th, ph):
        return 1 + 0.04 * np.sin(9 * th) * np.cos(7 * ph) + 0.03 * np.cos(5 * ph + 3 * th)

    return _embed_cap(uv, c=0.55, radial=radial)


def wavy(uv):
    x, y = uv[:, 0], uv[:, 1]
    z = 0.25 * (1 - x * x - y * y) + 0.08 * np.sin(3 * x) * np.cos(2 * y)
    return np.column_stack([1.3 * x, y, z])


SURFACES = {
    "hemisphere": hemisphere,
    "oblate": half_ellipsoid(0.6),
    "face": face,
    "mountain": mountain,
    "bunny": bunny_like,
    "wavy": wavy,
    "brain": brain_like,
}

# Benchmark corpus: (surface, rings, subdivision levels). The analytic caps
# above are kept out because the conformal map is already an isometry there.
BUNDLED = {
    "face": ("face", 30, 0),
    "mountain": ("mountain", 30, 0),
    "bunny": ("bunny", 30, 0),
    "wavy": ("wavy", 30, 0),
    "brain": ("brain", 40, 0),
    "face_50k": ("face", 64, 1),
}


def make_mesh(embed, n_rings: int = 30, levels: int = 0) -> TriMesh:
    uv, faces = disk_mesh2d(n_rings)
    for _ in range(levels):
        uv, faces = subdivide(uv, faces)
    return TriMesh.from_arrays(embed(uv), faces)


def benchmark(name: str, n_rings: int = 30, levels: int = 0) -> TriMesh:
    return make_mesh(SURFACES[name], n_rings, levels)


def bundled(name: str) -> TriMesh:
    surface, rings, levels = BUNDLED[name]
    return benchmark(surface, rings, levels)


def spectral_half_ellipsoid(c0: float, count: int = 2000) -> TriMesh:
    """Half ellipsoid ``a = 1, c = c0`` sampled uniformly in ``(xi_hat, phi)``.

    This is the vertex layout under which the harmonic basis of the
    ``c0`` hemispheroid is closest to orthonormal, so it has a known best
    radius.
    """
    from .harmonics import triangulate_cap
    from .projection import eta_from_xi_hat, eta_phi_to_point
    from .registration import Spheroid

    s = Spheroid(1.0, c0)
    i = np.arange(count)
    eta = eta_from_xi_hat(1.0 - 2.0 * (i + 0.5) / count, s.kind)
    phi = np.mod(i * np.pi * (3.0 - np.sqrt(5.0)), 2 * np.pi)
    return triangulate_cap(eta_phi_to_point(eta, phi, s), s)


def hemisphere_mesh(n_rings: int = 29, levels: int = 1) -> TriMesh:
    """Unit hemisphere ``z >= 0`` (about 10k vertices with the defaults)."""
    return make_mesh(hemisphere, n_rings, levels)
