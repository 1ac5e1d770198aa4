"""Distances and divergences between densities on a manifold.

Monte Carlo estimators (Hellinger, Kullback-Leibler) sample from the first
density; quadrature (L^p) is available on the Poincare disk; empirical
Wasserstein distances are solved exactly with the Hungarian algorithm.
Closed forms for Gaussians on the tangent space are included because the
push-forward through ``exp`` preserves Hellinger and KL.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linalg
from .distributions import make_rng
from .exceptions import QuadratureError, SymspaceError, UnsupportedError
from .manifolds import Manifold, PoincareBall

logger = logging.getLogger(__name__)

LOG_RATIO_CLAMP = 700.0
MAX_ASSIGNMENT = 512


@dataclass(frozen=True)
class DensityHandle:
    """A log-density on a manifold plus an optional exact sampler."""

    manifold: Manifold
    log_pdf: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[int, np.random.Generator], np.ndarray] | None = None

    @classmethod
    def from_model(cls, model) -> "DensityHandle":
        """Wrap anything with ``manifold``, ``log_pdf`` and optionally ``sample``."""
        return cls(model.manifold, model.log_pdf, getattr(model, "sample", None))

    def tangent_log_pdf(self, x: np.ndarray) -> np.ndarray:
        """Log-density of the pulled-back tangent measure, evaluated at ``log x``."""
        return self.log_pdf(x) - self.manifold.log_volume_factor(x)


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    n: int
    seed: int
    clamped: int = 0

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n": self.n, "seed": self.seed}


def _log_ratio(p: DensityHandle, q: DensityHandle, n: int, seed: int) -> tuple[np.ndarray, int]:
    if p.manifold != q.manifold:
        raise SymspaceError("densities live on different manifolds")
    if p.sampler is None:
        raise SymspaceError("the first density needs a sampler")
    if n < 2:
        raise SymspaceError("need at least two Monte Carlo samples")
    x = p.sampler(n, make_rng(seed))
    lr = np.asarray(q.log_pdf(x) - p.log_pdf(x), dtype=float)
    clamped = int(np.sum(np.abs(lr) > LOG_RATIO_CLAMP))
    if clamped:
        logger.warning("clamped %d log density ratios to +-%g", clamped, LOG_RATIO_CLAMP)
    return np.clip(lr, -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP), clamped


def hellinger_sq(p: DensityHandle, q: DensityHandle, n: int = 10_000, seed: int = 0) -> McEstimate:
    """Squared Hellinger distance ``int (sqrt f1 - sqrt f2)^2 = 2 - 2 E_p[sqrt(f2/f1)]``."""
    lr, clamped = _log_ratio(p, q, n, seed)
    w = np.exp(0.5 * lr)
    return McEstimate(float(2.0 - 2.0 * w.mean()), float(2.0 * w.std(ddof=1) / math.sqrt(n)), n, seed, clamped)


def kl_divergence(p: DensityHandle, q: DensityHandle, n: int = 10_000, seed: int = 0) -> McEstimate:
    """``KL(p || q) = E_p[log f1 - log f2]``."""
    lr, clamped = _log_ratio(p, q, n, seed)
    return McEstimate(float(-lr.mean()), float(lr.std(ddof=1) / math.sqrt(n)), n, seed, clamped)


def gaussian_hellinger_sq(mean1, cov1, mean2, cov2) -> float:
    """Closed-form squared Hellinger distance between two Gaussians (Bhattacharyya form)."""
    mean1, mean2 = np.atleast_1d(mean1).astype(float), np.atleast_1d(mean2).astype(float)
    cov1, cov2 = np.atleast_2d(cov1).astype(float), np.atleast_2d(cov2).astype(float)
    avg = 0.5 * (cov1 + cov2)
    diff = mean1 - mean2
    log_bc = (
        0.25 * float(linalg.logdet_pd(cov1)) + 0.25 * float(linalg.logdet_pd(cov2))
        - 0.5 * float(linalg.logdet_pd(avg)) - 0.125 * float(diff @ np.linalg.solve(avg, diff))
    )
    return 2.0 - 2.0 * math.exp(log_bc)


def gaussian_kl(mean1, cov1, mean2, cov2) -> float:
    mean1, mean2 = np.atleast_1d(mean1).astype(float), np.atleast_1d(mean2).astype(float)
    cov1, cov2 = np.atleast_2d(cov1).astype(float), np.atleast_2d(cov2).astype(float)
    d = mean1.size
    diff = mean2 - mean1
    return 0.5 * (
        float(np.trace(np.linalg.solve(cov2, cov1)))
        + float(diff @ np.linalg.solve(cov2, diff))
        - d
        + float(linalg.logdet_pd(cov2)) - float(linalg.logdet_pd(cov1))
    )


def disk_quadrature(n_radial: int = 500, n_angular: int = 360, rmax: float = 0.999) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint polar grid on the Poincare disk.

    Returns points of shape (n_radial * n_angular, 2) and weights for the
    hyperbolic area element ``4 / (1 - rho^2)^2 rho drho dtheta``.
    """
    drho = rmax / n_radial
    dtheta = 2.0 * math.pi / n_angular
    rho = (np.arange(n_radial) + 0.5) * drho
    theta = (np.arange(n_angular) + 0.5) * dtheta
    rr, tt = np.meshgrid(rho, theta, indexing="ij")
    points = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1).reshape(-1, 2)
    weights = (4.0 / (1.0 - rr * rr) ** 2 * rr * drho * dtheta).reshape(-1)
    return points, weights


def disk_integral(log_pdf: Callable[[np.ndarray], np.ndarray], n_radial: int = 500, n_angular: int = 360,
                  rmax: float = 0.999) -> float:
    """``int f dmu_g`` over the disk of Euclidean radius ``rmax``."""
    points, weights = disk_quadrature(n_radial, n_angular, rmax)
    return float(np.sum(np.exp(log_pdf(points)) * weights))


def _lp_integral(p: DensityHandle, q: DensityHandle, power: int, space: str, n_radial: int, n_angular: int,
                 rmax: float) -> float:
    points, weights = disk_quadrature(n_radial, n_angular, rmax)
    lp, lq = p.log_pdf(points), q.log_pdf(points)
    if space == "manifold":
        return float(np.sum(np.abs(np.exp(lp) - np.exp(lq)) ** power * weights))
    # tangent densities g = f / J against the pulled-back Lebesgue measure J d(mu_g) on the same nodes
    log_j = p.manifold.log_volume_factor(points)
    g1, g2 = np.exp(lp - log_j), np.exp(lq - log_j)
    return float(np.sum(np.abs(g1 - g2) ** power * np.exp(log_j) * weights))


def lp_distance_quadrature(p: DensityHandle, q: DensityHandle, power: int = 2, space: str = "manifold",
                           n_radial: int = 500, n_angular: int = 360, rmax: float = 0.999,
                           max_error: float = 1e-3) -> float:
    """L^p distance between two densities on the Poincare disk by polar quadrature.

    ``space="tangent"`` evaluates the distance between the pulled-back
    tangent densities on the same grid. The quadrature error is estimated
    against a grid of half the resolution; if it exceeds ``max_error``,
    :class:`QuadratureError` is raised.
    """
    if not isinstance(p.manifold, PoincareBall) or p.manifold.dim != 2 or q.manifold != p.manifold:
        raise UnsupportedError("L^p quadrature is implemented for poincare:2 only")
    if power not in (1, 2):
        raise SymspaceError("power must be 1 or 2")
    if space not in ("manifold", "tangent"):
        raise SymspaceError("space must be 'manifold' or 'tangent'")
    fine = _lp_integral(p, q, power, space, n_radial, n_angular, rmax)
    coarse = _lp_integral(p, q, power, space, max(1, n_radial // 2), max(1, n_angular // 2), rmax)
    if abs(fine - coarse) > max_error:
        raise QuadratureError(f"quadrature grid too coarse (estimated error {abs(fine - coarse):.2e})")
    return fine ** (1.0 / power)


def linear_assignment(cost: np.ndarray) -> np.ndarray:
    """Exact minimum-cost perfect matching of a square cost matrix.

    Hungarian algorithm with row/column potentials and shortest augmenting
    paths, O(n^3). Returns ``col`` such that row ``i`` is matched to
    column ``col[i]``.
    """
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if cost.ndim != 2 or cost.shape[1] != n:
        raise SymspaceError("cost matrix must be square")
    if not np.all(np.isfinite(cost)):
        raise SymspaceError("cost matrix must be finite")
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=np.int64)  # owner[j]: 1-based row matched to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    col = np.empty(n, dtype=np.int64)
    col[owner[1:] - 1] = np.arange(n)
    return col


def wasserstein_empirical(manifold: Manifold, xs: np.ndarray, ys: np.ndarray, p: float = 2.0,
                          cost: str = "geodesic") -> float:
    """Exact p-Wasserstein distance between two equal-size empirical measures.

    ``cost="geodesic"`` uses the manifold distance; ``cost="tangent"`` uses
    Euclidean distance between log-mapped points.
    """
    xs, ys = np.asarray(xs), np.asarray(ys)
    n = xs.shape[0]
    if ys.shape[0] != n:
        raise SymspaceError("point sets must have the same size")
    if n == 0 or n > MAX_ASSIGNMENT:
        raise SymspaceError(f"point sets must have between 1 and {MAX_ASSIGNMENT} points")
    if not p >= 1:
        raise SymspaceError("p must be at least 1")
    if cost == "geodesic":
        xb = np.expand_dims(xs, axis=1)
        yb = np.expand_dims(ys, axis=0)
        xb, yb = np.broadcast_arrays(xb, yb)
        dist = manifold.distance(xb.reshape((-1,) + xs.shape[1:]), yb.reshape((-1,) + ys.shape[1:])).reshape(n, n)
    elif cost == "tangent":
        lx, ly = manifold.log(xs), manifold.log(ys)
        dist = np.linalg.norm(lx[:, None, :] - ly[None, :, :], axis=-1)
    else:
        raise SymspaceError("cost must be 'geodesic' or 'tangent'")
    c = dist ** p
    col = linear_assignment(c)
    return float((c[np.arange(n), col].sum() / n) ** (1.0 / p))
