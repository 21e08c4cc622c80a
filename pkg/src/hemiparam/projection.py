"""Spheroidal projection between the unit disk and the Northern hemispheroid,
and latitude/azimuth coordinates on the hemispheroid surface.

All functions are vectorized over a leading point axis. Surface angles
``eta`` are polar angles from the apex.
"""

from __future__ import annotations

import numpy as np

from .registration import Spheroid

DEFAULT_EPS_ETA = np.pi / 160
SURFACE_TOL = 1e-6


class ProjectionError(ValueError):
    pass


def inverse_spheroidal_projection(p, s: Spheroid) -> np.ndarray:
    """Plane -> hemispheroid. The unit disk lands on ``z >= 0``."""
    p = np.asarray(p, dtype=np.float64)
    x, y = p[..., 0], p[..., 1]
    r2 = x * x + y * y
    d = 1.0 + r2
    return np.stack([2 * s.a * x / d, 2 * s.a * y / d, s.c * (1.0 - r2) / d], axis=-1)


def spheroidal_projection(q, s: Spheroid) -> np.ndarray:
    """Hemispheroid -> plane; singular at the South pole ``z = -c``."""
    q = np.asarray(q, dtype=np.float64)
    denom = s.a * (1.0 + q[..., 2] / s.c)
    if np.any(denom <= 0):
        raise ProjectionError("spheroidal projection is singular at z = -c")
    return np.stack([q[..., 0] / denom, q[..., 1] / denom], axis=-1)


def spheroid_residual(q, s: Spheroid) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return (q[..., 0] ** 2 + q[..., 1] ** 2) / s.a**2 + q[..., 2] ** 2 / s.c**2 - 1.0


def to_eta_phi(q, s: Spheroid, eps_eta: float = DEFAULT_EPS_ETA, tol: float = SURFACE_TOL):
    """Polar angle ``eta`` in ``[0, pi/2 - eps_eta]`` and azimuth ``phi`` in ``[0, 2 pi)``.

    ``eta`` is measured from the apex, ``(a sin eta cos phi, a sin eta sin
    phi, c cos eta)``, so the clamp keeps rim points off ``xi_hat = +-1``
    where every non-zonal basis function vanishes.
    """
    q = np.asarray(q, dtype=np.float64)
    res = np.abs(spheroid_residual(q, s))
    if np.any(res > tol):
        raise ProjectionError(f"point off the hemispheroid (residual {res.max():.3g})")
    rho = np.hypot(q[..., 0], q[..., 1]) / s.a
    eta = np.arctan2(rho, np.maximum(q[..., 2], 0.0) / s.c)
    eta = np.clip(eta, 0.0, np.pi / 2 - eps_eta)
    phi = np.mod(np.arctan2(q[..., 1], q[..., 0]), 2 * np.pi)
    # mod can round 2pi - tiny up to exactly 2pi
    phi = np.where(phi >= 2 * np.pi, 0.0, phi)
    return eta, phi


def eta_phi_to_point(eta, phi, s: Spheroid) -> np.ndarray:
    eta = np.asarray(eta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    se = np.sin(eta)
    return np.stack([s.a * se * np.cos(phi), s.a * se * np.sin(phi), s.c * np.cos(eta)], axis=-1)


def xi_hat(eta, kind: str) -> np.ndarray:
    """Affine-shifted Legendre argument for polar angle ``eta``.

    Oblate: ``2 cos(eta) - 1`` (the sine of the latitude), apex -> 1, rim -> -1.
    Prolate: ``1 - 2 cos(eta)``, apex -> -1, rim -> 1. Either way the
    argument varies linearly across the rim and quadratically at the apex.
    """
    eta = np.asarray(eta, dtype=np.float64)
    if kind == "oblate":
        return 2.0 * np.cos(eta) - 1.0
    if kind == "prolate":
        return 1.0 - 2.0 * np.cos(eta)
    raise ValueError(f"unknown spheroid kind {kind!r}")


def eta_from_xi_hat(xh, kind: str) -> np.ndarray:
    xh = np.asarray(xh, dtype=np.float64)
    if kind == "oblate":
        return np.arccos(np.clip((xh + 1.0) / 2.0, 0.0, 1.0))
    if kind == "prolate":
        return np.arccos(np.clip((1.0 - xh) / 2.0, 0.0, 1.0))
    raise ValueError(f"unknown spheroid kind {kind!r}")
