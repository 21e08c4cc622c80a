"""Hemispheroidal harmonic basis, least-squares decomposition and reconstruction.

The basis is built from fully normalized associated Legendre functions of
the shifted latitude ``xi_hat`` in ``[-1, 1]`` times ``cos(m phi)`` /
``sin(|m| phi)``. Columns are indexed ``k = n^2 + n + m``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from math import lgamma

import numpy as np
from scipy import linalg
from scipy.spatial import Delaunay

from .mesh import TriMesh
from .projection import DEFAULT_EPS_ETA, eta_from_xi_hat, eta_phi_to_point, spheroidal_projection, to_eta_phi, xi_hat
from .registration import RigidTransform, Spheroid

logger = logging.getLogger(__name__)

FORMAT_NAME = "hemiparam-harmonic-coefficients"
FORMAT_VERSION = 1
NORMAL_EQUATIONS_LIMIT = 1600
RANK_TOL = 1e-10


class HarmonicsError(ValueError):
    pass


def n_coeffs(n_max: int) -> int:
    return (n_max + 1) ** 2


def index(n: int, m: int) -> int:
    return n * n + n + m


def degree_order(k: int) -> tuple[int, int]:
    n = int(np.floor(np.sqrt(k)))
    return n, k - n * n - n


def norm_constant(n: int, m: int) -> float:
    """``sqrt((2n+1)(n-m)! / (4 pi (n+m)!))`` evaluated in log space."""
    return float(np.exp(0.5 * (np.log(2 * n + 1) + lgamma(n - m + 1) - np.log(4 * np.pi) - lgamma(n + m + 1))))


def _alp_columns(x: np.ndarray, n_max: int):
    """Yield ``(m, table)`` with ``table[n - m]`` the normalized ALP of degree n.

    Sectoral seeds are advanced multiplicatively in normalized form and
    the degree recurrence carries the normalization, so nothing overflows
    for the degrees in use here.
    """
    x = np.asarray(x, dtype=np.float64)
    u = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    pmm = np.full_like(x, 1.0 / np.sqrt(4 * np.pi))
    for m in range(n_max + 1):
        if m > 0:
            pmm = -np.sqrt((2 * m + 1) / (2 * m)) * u * pmm
        table = np.empty((n_max - m + 1,) + x.shape)
        table[0] = pmm
        if m < n_max:
            table[1] = x * np.sqrt(2 * m + 3) * pmm
        for n in range(m + 2, n_max + 1):
            a = np.sqrt((4 * n * n - 1) / (n * n - m * m))
            b = np.sqrt(((n - 1) ** 2 - m * m) / (4 * (n - 1) ** 2 - 1))
            table[n - m] = a * (x * table[n - m - 1] - b * table[n - m - 2])
        yield m, table


def alp_normalized(n: int, m: int, xhat) -> np.ndarray:
    """Fully normalized associated Legendre function ``N_n^m P_n^m(xhat)``.

    Includes the Condon-Shortley phase.
    """
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got n={n}, m={m}")
    x = np.asarray(xhat, dtype=np.float64)
    if np.any(np.abs(x) > 1):
        raise ValueError("xhat must lie in [-1, 1]")
    for mm, table in _alp_columns(x, n):
        if mm == m:
            return table[n - m]
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class BasisMatrix:
    values: np.ndarray  # (points, (n_max+1)^2)
    eta: np.ndarray
    phi: np.ndarray
    n_max: int
    kind: str

    @property
    def norms(self) -> np.ndarray:
        return np.array([norm_constant(*degree_order(k)) for k in range(self.values.shape[1])])


def basis_matrix(eta, phi, n_max: int, kind: str) -> BasisMatrix:
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    eta = np.asarray(eta, dtype=np.float64).ravel()
    phi = np.asarray(phi, dtype=np.float64).ravel()
    if eta.shape != phi.shape:
        raise ValueError("eta and phi must have the same length")
    x = np.clip(xi_hat(eta, kind), -1.0, 1.0)
    out = np.empty((len(eta), n_coeffs(n_max)))
    root2 = np.sqrt(2.0)
    for m, table in _alp_columns(x, n_max):
        ns = np.arange(m, n_max + 1)
        if m == 0:
            out[:, ns * ns + ns] = table.T
        else:
            cos_m, sin_m = np.cos(m * phi), np.sin(m * phi)
            out[:, ns * ns + ns + m] = root2 * table.T * cos_m[:, None]
            out[:, ns * ns + ns - m] = root2 * table.T * sin_m[:, None]
    return BasisMatrix(out, eta, phi, n_max, kind)


@dataclass(frozen=True)
class HarmonicCoeffs:
    n_max: int
    coeffs: np.ndarray  # ((n_max+1)^2, 3), row k = n^2 + n + m
    spheroid: Spheroid
    eps_eta: float = DEFAULT_EPS_ETA
    registration: RigidTransform = field(default_factory=RigidTransform.identity)
    residual_rms: float | None = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.shape != (n_coeffs(self.n_max), 3):
            raise ValueError(f"expected {n_coeffs(self.n_max)} coefficient triples, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    def __getitem__(self, nm) -> np.ndarray:
        n, m = nm
        if not (0 <= n <= self.n_max and -n <= m <= n):
            raise KeyError(nm)
        return self.coeffs[index(n, m)]

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "n_max": int(self.n_max),
            "spheroid": self.spheroid.to_dict(),
            "eps_eta": float(self.eps_eta),
            "registration": self.registration.to_dict(),
            "coefficients": [[float(v) for v in row] for row in self.coeffs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HarmonicCoeffs":
        if d.get("format") != FORMAT_NAME:
            raise HarmonicsError(f"not a coefficient file (format={d.get('format')!r})")
        if d.get("version") != FORMAT_VERSION:
            raise HarmonicsError(f"unsupported coefficient file version {d.get('version')!r}")
        sp = d["spheroid"]
        s = Spheroid(sp["a"], sp["c"])
        if s.kind != sp.get("kind", s.kind):
            raise HarmonicsError("spheroid kind does not match its semiaxes")
        return cls(
            int(d["n_max"]),
            np.asarray(d["coefficients"], dtype=np.float64).reshape(-1, 3),
            s,
            float(d["eps_eta"]),
            RigidTransform.from_dict(d["registration"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "HarmonicCoeffs":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _solve_least_squares(b: np.ndarray, y: np.ndarray) -> np.ndarray:
    k = b.shape[1]
    if b.shape[0] < k:
        raise HarmonicsError(f"{b.shape[0]} points cannot determine {k} coefficients; lower n_max")
    if k <= NORMAL_EQUATIONS_LIMIT:
        gram = b.T @ b
        d = np.sqrt(np.diag(gram))
        if np.any(d == 0):
            raise HarmonicsError("basis has a zero column on these points; lower n_max")
        scaled = gram / np.outer(d, d)
        try:
            cf = linalg.cho_factor(scaled)
        except linalg.LinAlgError:
            raise HarmonicsError("rank-deficient basis on these points; lower n_max") from None
        if np.min(np.abs(np.diag(cf[0]))) ** 2 < RANK_TOL:
            raise HarmonicsError("rank-deficient basis on these points; lower n_max")
        return linalg.cho_solve(cf, (b.T @ y) / d[:, None]) / d[:, None]
    # Householder QR without forming Q.
    geqrf, ormqr = linalg.lapack.dgeqrf, linalg.lapack.dormqr
    qr, tau, _, info = geqrf(np.array(b, order="F"), overwrite_a=True)
    if info != 0:
        raise HarmonicsError("QR factorization failed")
    r_diag = np.abs(np.diag(qr[:k, :k]))
    if r_diag.min() < RANK_TOL * r_diag.max():
        raise HarmonicsError("rank-deficient basis on these points; lower n_max")
    qty, _, info = ormqr("L", "T", qr, tau, np.array(y, order="F"), lwork=max(1, 64 * y.shape[1]))
    if info != 0:
        raise HarmonicsError("applying Q^T failed")
    return linalg.solve_triangular(qr[:k, :k], qty[:k], lower=False)


def decompose(
    hemi,
    mesh: TriMesh,
    s: Spheroid,
    n_max: int,
    eps_eta: float = DEFAULT_EPS_ETA,
    registration: RigidTransform | None = None,
) -> HarmonicCoeffs:
    """Fit the mesh vertex coordinates over the basis evaluated at ``hemi``."""
    hemi = np.asarray(hemi, dtype=np.float64)
    if hemi.shape != mesh.vertices.shape:
        raise ValueError("parameterization and mesh vertex counts differ")
    eta, phi = to_eta_phi(hemi, s, eps_eta)
    b = basis_matrix(eta, phi, n_max, s.kind).values
    y = np.asarray(mesh.vertices, dtype=np.float64)
    a = _solve_least_squares(b, y)
    residual = float(np.sqrt(np.mean(np.sum((b @ a - y) ** 2, axis=1))))
    logger.info("decomposed %d points at n_max=%d, residual rms %.3g", len(y), n_max, residual)
    return HarmonicCoeffs(n_max, a, s, eps_eta, registration or RigidTransform.identity(), residual)


def reconstruct(coeffs: HarmonicCoeffs, eta, phi, n_upto: int | None = None, original_pose: bool = False) -> np.ndarray:
    """Truncated expansion up to degree ``n_upto`` at the given coordinates."""
    n_upto = coeffs.n_max if n_upto is None else int(n_upto)
    if not 0 <= n_upto <= coeffs.n_max:
        raise ValueError(f"n_upto must lie in [0, {coeffs.n_max}]")
    b = basis_matrix(eta, phi, n_upto, coeffs.spheroid.kind).values
    pts = b @ coeffs.coeffs[: n_coeffs(n_upto)]
    if original_pose:
        pts = coeffs.registration.inverse().apply(pts)
    return pts


def _area_cdf(s: Spheroid, samples: int = 8193):
    eta = np.linspace(0.0, np.pi / 2, samples)
    dens = s.a * np.sin(eta) * np.sqrt((s.a * np.cos(eta)) ** 2 + (s.c * np.sin(eta)) ** 2)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(eta))])
    return eta, cum / cum[-1]


def sample_uniform_hemispheroid(s: Spheroid, count: int):
    """Golden-angle spiral with area-uniform latitude spacing, triangulated in the disk.

    Returns ``((eta, phi), mesh)`` where the mesh vertices lie on the
    hemispheroid in the same order as the coordinates.
    """
    if count < 4:
        raise ValueError("need at least 4 points")
    eta_grid, cdf = _area_cdf(s)
    i = np.arange(count)
    u = (i + 0.5) / count
    eta = np.interp(u, cdf, eta_grid)
    phi = np.mod(i * np.pi * (3.0 - np.sqrt(5.0)), 2 * np.pi)
    return (eta, phi), triangulate_cap(eta_phi_to_point(eta, phi, s), s)


def triangulate_cap(points, s: Spheroid) -> TriMesh:
    """Mesh points of the hemispheroid by Delaunay triangulation of their disk images."""
    disk = spheroidal_projection(points, s)
    faces = Delaunay(disk).simplices.astype(np.int64)
    e1 = disk[faces[:, 1]] - disk[faces[:, 0]]
    e2 = disk[faces[:, 2]] - disk[faces[:, 0]]
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    faces[cross < 0] = faces[cross < 0][:, ::-1]
    return TriMesh.from_arrays(points, faces, repair_orientation=False)


def coords_from_points(points, s: Spheroid, eps_eta: float = DEFAULT_EPS_ETA):
    return to_eta_phi(points, s, eps_eta)


def quadrature_grid(n_lat: int, n_lon: int, kind: str):
    """Gauss-Legendre nodes in ``xi_hat`` times a uniform azimuth grid.

    Weights integrate against ``d xi_hat d phi``, the measure the basis is
    orthonormal under.
    """
    x, w = np.polynomial.legendre.leggauss(n_lat)
    phi = 2 * np.pi * np.arange(n_lon) / n_lon
    eta = eta_from_xi_hat(x, kind)
    ee, pp = np.meshgrid(eta, phi, indexing="ij")
    ww = np.repeat(w, n_lon) * (2 * np.pi / n_lon)
    return ee.ravel(), pp.ravel(), ww
