"""Distortion, reconstruction-error and orthogonality diagnostics."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .harmonics import basis_matrix
from .mesh import DegenerateGeometryError, TriMesh, triangle_angles, triangle_areas

logger = logging.getLogger(__name__)

HIST_BINS = 64


@dataclass(frozen=True)
class DistortionReport:
    """Signed per-item values with statistics of their absolute values."""

    values: np.ndarray
    mean: float
    std: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray

    @classmethod
    def from_values(cls, values) -> "DistortionReport":
        v = np.asarray(values, dtype=np.float64).ravel()
        a = np.abs(v)
        lo, hi = (float(a.min()), float(a.max())) if len(a) else (0.0, 1.0)
        if hi <= lo:
            hi = lo + 1.0
        counts, edges = np.histogram(a, bins=HIST_BINS, range=(lo, hi))
        return cls(v, float(a.mean()), float(a.std()), counts, edges)

    @property
    def count(self) -> int:
        return len(self.values)

    def summary(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "count": self.count,
            "histogram": {"edges": [float(e) for e in self.hist_edges], "counts": [int(c) for c in self.hist_counts]},
        }


def _image_points(mesh: TriMesh, image) -> np.ndarray:
    p = np.asarray(image, dtype=np.float64)
    if p.ndim != 2 or len(p) != mesh.n_vertices or p.shape[1] not in (2, 3):
        raise ValueError("image must give one 2D or 3D point per mesh vertex")
    return p


def angle_distortion(mesh: TriMesh, image) -> DistortionReport:
    """Per-corner angle change in degrees."""
    img = _image_points(mesh, image)
    return DistortionReport.from_values(triangle_angles(img, mesh.faces) - triangle_angles(mesh.vertices, mesh.faces))


def area_distortion(mesh: TriMesh, image) -> DistortionReport:
    """Per-face log ratio of total-area-normalized image and source areas."""
    img = _image_points(mesh, image)
    a_img = triangle_areas(img, mesh.faces)
    a_src = triangle_areas(mesh.vertices, mesh.faces)
    for name, a in (("image", a_img), ("source", a_src)):
        bad = np.flatnonzero(a <= 0)
        if len(bad):
            raise DegenerateGeometryError(f"zero-area {name} face {bad[0]}")
    return DistortionReport.from_values(np.log((a_img / a_img.sum()) / (a_src / a_src.sum())))


# ------------------------------------------------------------ point to mesh distance


def closest_points_on_triangles(p, a, b, c) -> np.ndarray:
    """Closest point on triangle ``abc`` to ``p``, row-wise (Voronoi-region case analysis)."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        out = a + v[:, None] * ab + w[:, None] * ac  # interior

        den_bc = (d4 - d3) + (d5 - d6)
        t_bc = np.where(den_bc != 0, (d4 - d3) / den_bc, 0.0)
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        out[m] = b[m] + t_bc[m, None] * (c - b)[m]
        t_ac = np.where(d2 != d6, d2 / (d2 - d6), 0.0)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out[m] = a[m] + t_ac[m, None] * ac[m]
        t_ab = np.where(d1 != d3, d1 / (d1 - d3), 0.0)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out[m] = a[m] + t_ab[m, None] * ab[m]

    m = (d6 >= 0) & (d5 <= d6)
    out[m] = c[m]
    m = (d3 >= 0) & (d4 <= d3)
    out[m] = b[m]
    m = (d1 <= 0) & (d2 <= 0)
    out[m] = a[m]
    return out


class SurfaceDistance:
    """Exact point-to-triangle-mesh distance with a centroid k-d tree for culling.

    The nearest mesh vertex bounds the true distance from above, so only
    triangles whose centroid lies within that bound plus the largest
    centroid-to-corner radius need an exact test.
    """

    def __init__(self, points, faces, chunk: int = 2048):
        self.points = np.asarray(points, dtype=np.float64)
        self.faces = np.asarray(faces)
        tri = self.points[self.faces]
        cent = tri.mean(axis=1)
        self.radius = float(np.linalg.norm(tri - cent[:, None], axis=2).max())
        self.face_tree = cKDTree(cent)
        self.vertex_tree = cKDTree(self.points)
        self.chunk = chunk

    def distances(self, queries) -> np.ndarray:
        q = np.asarray(queries, dtype=np.float64)
        out = np.empty(len(q))
        for s in range(0, len(q), self.chunk):
            qs = q[s : s + self.chunk]
            upper, _ = self.vertex_tree.query(qs)
            cands = self.face_tree.query_ball_point(qs, upper + self.radius + 1e-12)
            lens = np.fromiter((len(c) for c in cands), dtype=np.int64, count=len(qs))
            fid = np.fromiter((f for c in cands for f in c), dtype=np.int64, count=int(lens.sum()))
            qi = np.repeat(np.arange(len(qs)), lens)
            tri = self.points[self.faces[fid]]
            cp = closest_points_on_triangles(qs[qi], tri[:, 0], tri[:, 1], tri[:, 2])
            d = np.linalg.norm(qs[qi] - cp, axis=1)
            best = np.minimum.reduceat(d, np.r_[0, np.cumsum(lens)[:-1]])
            out[s : s + len(qs)] = np.minimum(best, upper)
        return out


def bbox_diagonal(points) -> float:
    p = np.asarray(points)
    return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def a_rmse(reference: TriMesh, other: TriMesh, normalize: bool = True) -> float:
    """Symmetric RMS vertex-to-surface distance, averaged over both directions.

    Normalized by the bounding-box diagonal of ``reference`` unless
    ``normalize`` is false.
    """
    if reference.n_vertices == 0 or other.n_vertices == 0:
        raise ValueError("empty mesh")
    d_ab = SurfaceDistance(other.vertices, other.faces).distances(reference.vertices)
    d_ba = SurfaceDistance(reference.vertices, reference.faces).distances(other.vertices)
    value = 0.5 * (np.sqrt(np.mean(d_ab**2)) + np.sqrt(np.mean(d_ba**2)))
    if normalize:
        value /= bbox_diagonal(reference.vertices)
    return float(value)


# ------------------------------------------------------------ orthogonality


def normalized_gram(eta, phi, n_max: int, kind: str, weights=None) -> np.ndarray:
    b = basis_matrix(eta, phi, n_max, kind).values
    if weights is not None:
        b = b * np.sqrt(np.asarray(weights, dtype=np.float64))[:, None]
    norms = np.linalg.norm(b, axis=0)
    if np.any(norms == 0):
        k = int(np.flatnonzero(norms == 0)[0])
        raise ValueError(f"basis column {k} vanishes on these points")
    b = b / norms
    return b.T @ b


def orthogonality_error(map_coords, reference_coords, n_max: int, kind: str):
    """Entrywise ``|G_map - G_ref|`` of unit-column Gram matrices and its mean."""
    g_map = normalized_gram(*map_coords, n_max, kind)
    g_ref = normalized_gram(*reference_coords, n_max, kind)
    diff = np.abs(g_map - g_ref)
    return diff, float(diff.mean())


def mean_orthogonality(coords, n_max: int, kind: str, weights=None) -> float:
    """Mean absolute off-diagonal entry of the unit-column Gram matrix."""
    g = normalized_gram(*coords, n_max, kind, weights)
    k = len(g)
    if k == 1:
        return 0.0
    return float((np.abs(g).sum() - np.abs(np.diag(g)).sum()) / (k * k - k))


# ------------------------------------------------------------ output


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_histogram_csv(path, reports: dict) -> None:
    """One row per bin: metric, bin_lo, bin_hi, count."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "bin_lo", "bin_hi", "count"])
        for name, rep in reports.items():
            for lo, hi, c in zip(rep.hist_edges[:-1], rep.hist_edges[1:], rep.hist_counts):
                w.writerow([name, repr(float(lo)), repr(float(hi)), int(c)])
