"""Deterministic bounded minimization and the two outer parameter searches."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

logger = logging.getLogger(__name__)


class BudgetExhausted(Exception):
    pass


@dataclass
class SearchSpec:
    lower: np.ndarray
    upper: np.ndarray
    max_evals: int = 200
    tol: float = 1e-4
    seeds: list = field(default_factory=list)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise ValueError("search bounds must satisfy lower <= upper")
        if self.max_evals < 1:
            raise ValueError("max_evals must be positive")


class _Counted:
    """Objective wrapper that caches, tracks the incumbent and enforces the budget."""

    def __init__(self, fn, spec: SearchSpec):
        self.fn = fn
        self.spec = spec
        self.n = 0
        self.cache = {}
        self.best_x = None
        self.best_f = np.inf

    def __call__(self, x):
        x = np.clip(np.asarray(x, dtype=np.float64), self.spec.lower, self.spec.upper)
        key = x.tobytes()
        if key in self.cache:
            return self.cache[key]
        if self.n >= self.spec.max_evals:
            raise BudgetExhausted
        self.n += 1
        f = float(self.fn(x))
        if np.isnan(f):
            f = np.inf
        self.cache[key] = f
        if f < self.best_f:
            self.best_f, self.best_x = f, x.copy()
        return f


def minimize_bounded(fn, spec: SearchSpec):
    """Seeds, then a compass search with step halving, then a Nelder-Mead polish.

    Returns ``(x_best, f_best, n_evals)``. Deterministic for a deterministic
    objective; never spends more than ``spec.max_evals`` evaluations.
    """
    obj = _Counted(fn, spec)
    width = spec.upper - spec.lower
    seeds = [np.asarray(s, dtype=np.float64) for s in spec.seeds] or [0.5 * (spec.lower + spec.upper)]
    try:
        for s in seeds:
            obj(s)
        if not np.isfinite(obj.best_f):
            logger.warning("no seed produced a finite objective value")
        x, fx = obj.best_x, obj.best_f
        step = 0.125 * width
        dims = len(x)
        while np.any(step > spec.tol * np.maximum(width, 1e-300)):
            improved = False
            for d in range(dims):
                if step[d] <= 0:
                    continue
                for sgn in (1.0, -1.0):
                    y = x.copy()
                    y[d] = np.clip(y[d] + sgn * step[d], spec.lower[d], spec.upper[d])
                    fy = obj(y)
                    if fy < fx:
                        x, fx, improved = y, fy, True
                        break
            if not improved:
                step = 0.5 * step
        if np.isfinite(fx) and obj.n < spec.max_evals:
            bounds = list(zip(spec.lower, spec.upper))
            remaining = spec.max_evals - obj.n
            minimize(obj, x, method="Nelder-Mead", bounds=bounds, options={"maxfev": remaining, "xatol": spec.tol, "fatol": 1e-12})
    except BudgetExhausted:
        logger.debug("evaluation budget of %d exhausted", spec.max_evals)
    return obj.best_x, obj.best_f, obj.n


# ------------------------------------------------------------ radius of the hemispheroid


@dataclass(frozen=True)
class RadiusSample:
    c: float
    orthogonality: float
    a_rmse: float | None = None


def _radius_sample(mesh, c, n_max_probe, eps_eta, with_armse):
    from .area import hemispheroidal_area_preserving
    from .harmonics import decompose, reconstruct
    from .metrics import a_rmse, mean_orthogonality
    from .projection import to_eta_phi
    from .registration import Spheroid

    s = Spheroid(1.0, c)
    try:
        hemi = hemispheroidal_area_preserving(mesh, s).hemi
        coords = to_eta_phi(hemi, s, eps_eta)
        ortho = mean_orthogonality(coords, n_max_probe, s.kind)
        err = None
        if with_armse:
            coeffs = decompose(hemi, mesh, s, n_max_probe, eps_eta)
            err = a_rmse(mesh, mesh.with_vertices(reconstruct(coeffs, *coords)))
    except Exception as exc:  # a failed sample is skipped, not fatal
        logger.warning("radius sample c=%.4g failed: %s", c, exc)
        return None
    return RadiusSample(float(c), ortho, err)


def _map_ordered(fn, items, jobs):
    if jobs is None or jobs <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def optimize_radius_c(
    mesh,
    c_bounds=(0.2, 2.0),
    n_max_probe: int = 10,
    n_samples: int = 15,
    refine_evals: int = 12,
    eps_eta: float | None = None,
    with_armse: bool = False,
    jobs: int | None = None,
):
    """Polar semiaxis ``c`` (with ``a = 1``) minimizing the mean basis cross-correlation.

    Samples ``c`` log-uniformly, then refines between the neighbours of the
    best sample. Returns ``(c_star, curve)`` with the curve sorted by ``c``;
    ``c_star`` is always the curve's minimizer.
    """
    from .projection import DEFAULT_EPS_ETA

    eps_eta = DEFAULT_EPS_ETA if eps_eta is None else eps_eta
    lo, hi = float(c_bounds[0]), float(c_bounds[1])
    if not 0 < lo < hi:
        raise ValueError("c bounds must satisfy 0 < lower < upper")
    samples = {}

    def run(c):
        return _radius_sample(mesh, c, n_max_probe, eps_eta, with_armse)

    grid = np.exp(np.linspace(np.log(lo), np.log(hi), n_samples))
    for c, r in zip(grid, _map_ordered(run, grid, jobs)):
        if r is not None:
            samples[float(c)] = r
    if not samples:
        raise RuntimeError("every radius sample failed")
    best = min(samples.values(), key=lambda r: r.orthogonality).c
    i = int(np.searchsorted(grid, best))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]

    def objective(x):
        c = float(x[0])
        if c not in samples:
            r = run(c)
            if r is None:
                return np.inf
            samples[c] = r
        return samples[c].orthogonality

    if refine_evals > 0 and b > a:
        spec = SearchSpec([np.log(a)], [np.log(b)], max_evals=refine_evals, tol=1e-3, seeds=[[np.log(best)]])
        minimize_bounded(lambda x: objective(np.exp(x)), spec)
    curve = sorted(samples.values(), key=lambda r: r.c)
    c_star = min(curve, key=lambda r: r.orthogonality).c
    return c_star, curve


def write_curve_csv(path, curve) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["c", "mean_orthogonality", "a_rmse"])
        for r in curve:
            w.writerow([repr(r.c), repr(r.orthogonality), "" if r.a_rmse is None else repr(r.a_rmse)])


# ------------------------------------------------------------ balance weights


def optimize_weights(mesh, s, n_max_probe: int = 10, components=None, max_evals: int = 60, eps_eta: float | None = None):
    """Balance weights minimizing the A-RMSE of a degree ``n_max_probe`` reconstruction.

    Searches ``(alpha, beta)`` on the unit square with ``gamma = 1 - alpha -
    beta``; points outside the simplex score ``+inf``. Returns
    ``(weights, best_error, n_evals)``.
    """
    from .balanced import BalanceWeights, balanced_components, balanced_from_components
    from .harmonics import decompose, reconstruct
    from .metrics import a_rmse
    from .projection import DEFAULT_EPS_ETA, to_eta_phi

    eps_eta = DEFAULT_EPS_ETA if eps_eta is None else eps_eta
    comp = components if components is not None else balanced_components(mesh, s)

    def weights_of(x):
        alpha, beta = float(x[0]), float(x[1])
        gamma = 1.0 - alpha - beta
        if gamma < -1e-12:
            return None
        return BalanceWeights(alpha, beta, max(gamma, 0.0))

    def objective(x):
        w = weights_of(x)
        if w is None:
            return np.inf
        hemi = balanced_from_components(mesh, s, comp, w).hemi
        coeffs = decompose(hemi, mesh, s, n_max_probe, eps_eta)
        recon = reconstruct(coeffs, *to_eta_phi(hemi, s, eps_eta))
        return a_rmse(mesh, mesh.with_vertices(recon))

    seeds = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1 / 3, 1 / 3], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]]
    spec = SearchSpec([0.0, 0.0], [1.0, 1.0], max_evals=max_evals, tol=1e-3, seeds=seeds)
    x, f, n = minimize_bounded(objective, spec)
    return weights_of(x), f, n
