"""Density estimation on manifolds by working in tangent coordinates.

Data are mapped to the tangent space at ``e`` with ``log``, estimated there
with a Euclidean method, and the estimate is pushed back with the volume
factor. Two tangent-space estimators are provided (a Gaussian KDE and a
Gaussian mixture fitted by EM), plus Wishart and inverse-Wishart kernel
baselines that work on positive definite matrices directly.

Unless stated otherwise log-densities are with respect to the Riemannian
volume measure of the manifold. The ``euclidean_gaussian`` kernel is the
exception: it is a plain KDE on vectorised chart coordinates, and its
density is with respect to Lebesgue measure on those coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .distributions import LOG_2PI, make_rng, multigammaln
from .exceptions import ConvergenceError, SymspaceError, UnsupportedError
from .manifolds import Euclidean, Manifold, PositiveDefinite, SiegelDisk, manifold_from_string
from .parallel import derive_seed, ordered_map

KERNELS = ("log_gaussian", "euclidean_gaussian", "wishart", "inverse_wishart")
_CHUNK = 4_000_000


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    top = np.max(a, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    return np.squeeze(top, axis=axis) + np.log(np.sum(np.exp(a - top), axis=axis))


def chart_vectors(manifold: Manifold, points: np.ndarray) -> np.ndarray:
    """Vectorise chart coordinates (``Vec(X)``) without mapping to the tangent space."""
    points = manifold.validate(points)
    if isinstance(manifold, PositiveDefinite):
        return linalg.sym_vec(points)
    if isinstance(manifold, SiegelDisk):
        return np.concatenate([linalg.sym_vec(points.real), linalg.sym_vec(points.imag)], axis=-1)
    return np.asarray(points, dtype=float)


def _pairwise_sqdist(q: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, computed from explicit differences in chunks."""
    out = np.empty((q.shape[0], c.shape[0]))
    step = max(1, _CHUNK // max(1, c.size))
    for start in range(0, q.shape[0], step):
        diff = q[start:start + step, None, :] - c[None, :, :]
        out[start:start + step] = np.einsum("qnd,qnd->qn", diff, diff)
    return out


def _gaussian_kernel_scores(sqdist: np.ndarray, h: float, d: int) -> np.ndarray:
    """Per-query log of (1/n) sum_i N(q; c_i, h^2 I)."""
    n = sqdist.shape[1]
    return _logsumexp(-0.5 * sqdist / (h * h), axis=1) - math.log(n) - 0.5 * d * (LOG_2PI + 2.0 * math.log(h))


class _WishartPairs:
    """Pairwise statistics shared by all dof values of a Wishart-family KDE."""

    def __init__(self, train: np.ndarray, query: np.ndarray, inverse: bool):
        self.m = train.shape[-1]
        self.n = train.shape[0]
        self.inverse = inverse
        self.logdet_train = linalg.logdet_pd(train)
        self.logdet_query = linalg.logdet_pd(query)
        if inverse:
            # tr(X_i X^-1)
            self.trace = np.einsum("nij,qji->qn", train, np.linalg.inv(query))
        else:
            # tr(X_i^-1 X)
            self.trace = np.einsum("nij,qji->qn", np.linalg.inv(train), query)

    def log_pdf_lebesgue(self, nu: float) -> np.ndarray:
        m = self.m
        if self.inverse:
            # W^-1(X | nu X_i, nu + m + 1): centred at X_i
            dof = nu + m + 1
            log_k = (
                0.5 * dof * (m * math.log(nu) + self.logdet_train)[None, :]
                - 0.5 * dof * m * math.log(2.0)
                - multigammaln(0.5 * dof, m)
                - 0.5 * (dof + m + 1) * self.logdet_query[:, None]
                - 0.5 * nu * self.trace
            )
        else:
            # W(X | X_i / nu, nu): centred at X_i
            log_k = (
                0.5 * (nu - m - 1) * self.logdet_query[:, None]
                - 0.5 * nu * self.trace
                - 0.5 * nu * m * math.log(2.0)
                - 0.5 * nu * (self.logdet_train[None, :] - m * math.log(nu))
                - multigammaln(0.5 * nu, m)
            )
        return _logsumexp(log_k, axis=1) - math.log(self.n)


@dataclass(eq=False)
class KdeModel:
    """Fitted kernel density estimate.

    ``bandwidth`` is the kernel standard deviation ``h`` for the Gaussian
    kinds and the degrees-of-freedom tuning parameter for the Wishart kinds.
    ``data`` holds tangent coordinates (``log_gaussian``), vectorised chart
    coordinates (``euclidean_gaussian``) or the raw matrices (Wishart kinds).
    """

    manifold: Manifold
    kind: str
    bandwidth: float
    data: np.ndarray

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        single = x.shape == self.manifold.chart_shape
        batch = x.reshape((-1,) + self.manifold.chart_shape)
        if self.kind == "log_gaussian":
            v = self.manifold.log(batch)
            out = _gaussian_kernel_scores(_pairwise_sqdist(v, self.data), self.bandwidth, self.manifold.dim)
            out = out + self.manifold.log_volume_factor_tangent(v)
        elif self.kind == "euclidean_gaussian":
            z = chart_vectors(self.manifold, batch)
            out = _gaussian_kernel_scores(_pairwise_sqdist(z, self.data), self.bandwidth, z.shape[-1])
        else:
            query = self.manifold.validate(batch)
            pairs = _WishartPairs(self.data, query, inverse=self.kind == "inverse_wishart")
            out = pairs.log_pdf_lebesgue(self.bandwidth) - self.manifold.log_riemannian_volume_density(query)
        return out[0] if single else out.reshape(x.shape[: x.ndim - len(self.manifold.chart_shape)])

    def to_dict(self) -> dict:
        data = self.data
        return {
            "type": "kde",
            "manifold": self.manifold.name,
            "kind": self.kind,
            "h": float(self.bandwidth),
            "data": data.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KdeModel":
        return cls(manifold_from_string(d["manifold"]), d["kind"], float(d["h"]), np.asarray(d["data"], dtype=float))


def kde_fit(manifold: Manifold, points: np.ndarray, h: float, kind: str = "log_gaussian") -> KdeModel:
    """Fit a KDE: store the log-mapped points (or what the kernel kind needs)."""
    if kind not in KERNELS:
        raise SymspaceError(f"unknown kernel {kind!r}; expected one of {KERNELS}")
    if not h > 0:
        raise SymspaceError("bandwidth must be positive")
    points = np.asarray(points)
    if points.shape == manifold.chart_shape:
        points = points[None]
    if points.shape[0] < 1:
        raise SymspaceError("need at least one point")
    if kind == "log_gaussian":
        data = manifold.log(points)
    elif kind == "euclidean_gaussian":
        data = chart_vectors(manifold, points)
    else:
        if not isinstance(manifold, PositiveDefinite):
            raise UnsupportedError("Wishart kernels need a pd:<m> manifold")
        lower = manifold.m - 1
        if not h > lower:
            raise SymspaceError(f"Wishart kernel parameter must exceed {lower}")
        data = manifold.validate(points)
    return KdeModel(manifold, kind, float(h), np.array(data, dtype=float))


@dataclass
class CvReport:
    """Cross-validation result: ``fold_scores[k, j]`` is the mean held-out
    log-density of fold ``k`` under candidate ``j``."""

    candidates: np.ndarray
    fold_scores: np.ndarray
    selected: float

    @property
    def mean_scores(self) -> np.ndarray:
        return self.fold_scores.mean(axis=0)

    def to_dict(self) -> dict:
        return {
            "candidates": self.candidates.tolist(),
            "fold_scores": self.fold_scores.tolist(),
            "selected": self.selected,
        }


def default_bandwidth_grid(coords: np.ndarray, size: int = 20) -> np.ndarray:
    """Log-spaced grid over [0.01 s, 10 s], s = mean per-coordinate standard deviation."""
    s = float(np.mean(np.std(coords, axis=0)))
    if not s > 0:
        s = 1.0
    return np.geomspace(0.01 * s, 10.0 * s, size)


def default_dof_grid(m: int, kind: str, size: int = 20) -> np.ndarray:
    lower = float(m) if kind == "wishart" else float(m + 2)
    return np.geomspace(lower, 200.0, size)


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    perm = make_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def _select(candidates: np.ndarray, scores: np.ndarray, prefer_large: bool) -> float:
    """argmax of mean score; exact ties go to the smoother candidate, then first index."""
    mean = scores.mean(axis=0)
    mean = np.where(np.isnan(mean), -np.inf, mean)
    best = np.max(mean)
    tied = np.flatnonzero(mean == best)
    pick = tied[0]
    for j in tied[1:]:
        if (candidates[j] > candidates[pick]) if prefer_large else (candidates[j] < candidates[pick]):
            pick = j
    return float(candidates[pick])


def kde_fold_scores(manifold: Manifold, points: np.ndarray, grid: np.ndarray, folds: int,
                    seed: int, kind: str = "log_gaussian") -> np.ndarray:
    """Held-out mean log-density per fold and candidate, shape (folds, len(grid))."""
    points = np.asarray(points)
    n = points.shape[0]
    if n < 2 * folds:
        raise SymspaceError(f"need at least {2 * folds} points for {folds}-fold cross-validation")
    if kind == "log_gaussian":
        data = manifold.log(points)
        offset = manifold.log_volume_factor_tangent(data)
    elif kind == "euclidean_gaussian":
        data = chart_vectors(manifold, points)
        offset = np.zeros(n)
    elif kind in ("wishart", "inverse_wishart"):
        if not isinstance(manifold, PositiveDefinite):
            raise UnsupportedError("Wishart kernels need a pd:<m> manifold")
        data = manifold.validate(points)
        offset = -manifold.log_riemannian_volume_density(data)
    else:
        raise SymspaceError(f"unknown kernel {kind!r}")
    splits = fold_indices(n, folds, seed)

    def score(k: int) -> np.ndarray:
        test = splits[k]
        train = np.concatenate([splits[j] for j in range(folds) if j != k])
        row = np.empty(len(grid))
        if kind in ("log_gaussian", "euclidean_gaussian"):
            sq = _pairwise_sqdist(data[test], data[train])
            for j, h in enumerate(grid):
                row[j] = np.mean(_gaussian_kernel_scores(sq, float(h), data.shape[-1]) + offset[test])
        else:
            pairs = _WishartPairs(data[train], data[test], inverse=kind == "inverse_wishart")
            for j, nu in enumerate(grid):
                row[j] = np.mean(pairs.log_pdf_lebesgue(float(nu)) + offset[test])
        if np.any(np.isnan(row)):
            raise SymspaceError("cross-validation produced NaN scores; check the input data")
        return row

    return np.array(ordered_map(score, range(folds)))


def bandwidth_cv(manifold: Manifold, points: np.ndarray, grid=None, folds: int = 5, seed: int = 0,
                 kind: str = "log_gaussian") -> CvReport:
    """k-fold cross-validated kernel parameter by mean held-out log-likelihood.

    Ties go to the smoother kernel: larger ``h`` for Gaussian kernels and
    smaller dof for the Wishart kinds.
    """
    points = np.asarray(points)
    if grid is None:
        if kind in ("wishart", "inverse_wishart"):
            grid = default_dof_grid(manifold.chart_shape[-1], kind)
        elif kind == "log_gaussian":
            grid = default_bandwidth_grid(manifold.log(points))
        else:
            grid = default_bandwidth_grid(chart_vectors(manifold, points))
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0 or np.any(~(grid > 0)):
        raise SymspaceError("bandwidth grid must be nonempty and positive")
    scores = kde_fold_scores(manifold, points, grid, folds, seed, kind)
    prefer_large = kind in ("log_gaussian", "euclidean_gaussian")
    return CvReport(grid, scores, _select(grid, scores, prefer_large))


@dataclass(eq=False)
class MixtureModel:
    """Gaussian mixture in tangent coordinates, pushed forward to the manifold."""

    manifold: Manifold
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    covariance_type: str = "full"
    n_iter: int = 0
    log_likelihood: float = float("nan")
    converged: bool = False
    history: list = field(default_factory=list, repr=False)

    @property
    def n_components(self) -> int:
        return self.weights.size

    def log_pdf_tangent(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        flat = z.reshape(-1, z.shape[-1])
        comp = _component_log_pdf(flat, self.means, self.covariances) + np.log(self.weights)
        return _logsumexp(comp, axis=1).reshape(z.shape[:-1])

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        v = self.manifold.log(x)
        return self.log_pdf_tangent(v) + self.manifold.log_volume_factor_tangent(v)

    def to_dict(self) -> dict:
        return {
            "type": "mixture",
            "manifold": self.manifold.name,
            "covariance_type": self.covariance_type,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "n_iter": self.n_iter,
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureModel":
        return cls(
            manifold_from_string(d["manifold"]),
            np.asarray(d["weights"], float),
            np.asarray(d["means"], float),
            np.asarray(d["covariances"], float),
            d.get("covariance_type", "full"),
            int(d.get("n_iter", 0)),
            float(d.get("log_likelihood", float("nan"))),
            bool(d.get("converged", False)),
        )


def _component_log_pdf(x: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """log N(x_i; mu_k, S_k) for all i, k; shape (n, K)."""
    d = x.shape[1]
    chol = linalg.cholesky(covs)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    inv_chol_t = np.swapaxes(np.linalg.inv(chol), -1, -2)
    white = (x[None, :, :] - means[:, None, :]) @ inv_chol_t
    return -0.5 * (d * LOG_2PI + logdet[:, None] + np.sum(white * white, axis=-1)).T


def _floor_covariance(cov: np.ndarray, floor: float, diagonal: bool) -> np.ndarray:
    """Constrained MLE over {S >= floor I}: clip the eigenvalues (batched)."""
    if diagonal:
        diag = np.maximum(np.diagonal(cov, axis1=-2, axis2=-1), floor)
        return diag[..., :, None] * np.eye(cov.shape[-1])
    try:
        np.linalg.cholesky(cov - floor * np.eye(cov.shape[-1]))
        return cov  # every eigenvalue already exceeds the floor
    except np.linalg.LinAlgError:
        pass
    eig = linalg.sym_eig(cov)
    return linalg.compose(np.maximum(eig.eigenvalues, floor), eig.eigenvectors)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers.append(x[idx])
        closest = np.minimum(closest, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def em_fit(coords: np.ndarray, n_components: int, seed: int = 0, max_iter: int = 500, tol: float = 1e-8,
           reg_floor: float = 1e-6, covariance: str = "full", manifold: Manifold | None = None) -> MixtureModel:
    """Fit a Gaussian mixture to tangent coordinates by EM.

    Means are seeded by k-means++, covariances start at the global sample
    covariance and weights at 1/K. Iteration stops when the relative
    log-likelihood gain drops below ``tol`` or after ``max_iter`` steps.
    Covariance eigenvalues are floored at ``reg_floor``, which keeps every
    M-step a constrained maximiser so the likelihood never decreases; a
    decrease beyond round-off raises :class:`ConvergenceError`.
    """
    x = np.asarray(coords, dtype=float)
    if x.ndim != 2:
        raise SymspaceError("coords must be an (n, d) array")
    n, d = x.shape
    k = int(n_components)
    if k < 1 or k > n:
        raise SymspaceError(f"need 1 <= K <= n, got K={k}, n={n}")
    if covariance not in ("full", "diagonal"):
        raise SymspaceError("covariance must be 'full' or 'diagonal'")
    diagonal = covariance == "diagonal"
    if manifold is None:
        manifold = Euclidean(d)
    rng = make_rng(seed)

    centered = x - x.mean(axis=0)
    global_cov = _floor_covariance(centered.T @ centered / n, reg_floor, diagonal)
    means = _kmeans_pp(x, k, rng)
    covs = np.broadcast_to(global_cov, (k, d, d)).copy()
    weights = np.full(k, 1.0 / k)

    history: list[float] = []
    reseeded = False
    converged = False
    it = 0
    prev = -np.inf
    for it in range(1, max_iter + 1):
        log_joint = _component_log_pdf(x, means, covs) + np.log(weights)
        log_norm = _logsumexp(log_joint, axis=1)
        ll = float(np.sum(log_norm))
        if history and ll < prev - 1e-10 * max(1.0, abs(prev)):
            raise ConvergenceError(f"EM log-likelihood decreased from {prev!r} to {ll!r}")
        history.append(ll)
        if np.isfinite(prev) and ll - prev < tol * abs(prev):
            converged = True
            break
        prev = ll

        resp = np.exp(log_joint - log_norm[:, None])
        nk = resp.sum(axis=0)
        empty = nk < 0.1  # weight below 1/(10 n)
        if np.any(empty):
            if reseeded:
                raise ConvergenceError("mixture component emptied twice; reduce K")
            reseeded = True
            worst = np.argsort(log_norm, kind="stable")
            for j, comp in enumerate(np.flatnonzero(empty)):
                resp[:, comp] = 0.0
                resp[worst[j], :] = 0.0
                resp[worst[j], comp] = 1.0
            nk = resp.sum(axis=0)
            # likelihood tracking restarts after a reseed
            history.append(float("nan"))
            prev = -np.inf
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        diff = x[None, :, :] - means[:, None, :]
        scatter = (np.swapaxes(diff, -1, -2) * resp.T[:, None, :]) @ diff
        with np.errstate(invalid="ignore", divide="ignore"):
            cov = scatter / nk[:, None, None]
        cov = np.where((nk > 0)[:, None, None], cov, global_cov)
        covs = _floor_covariance(0.5 * (cov + np.swapaxes(cov, -1, -2)), reg_floor, diagonal)
        weights = weights / weights.sum()

    return MixtureModel(manifold, weights, means, covs, covariance, it, history[-1], converged,
                        [h for h in history])


def mixture_fit(manifold: Manifold, points: np.ndarray, n_components: int, seed: int = 0, **kwargs) -> MixtureModel:
    """Log-map the points and fit a tangent-space mixture (mixture of log-Gaussians)."""
    return em_fit(manifold.log(points), n_components, seed=seed, manifold=manifold, **kwargs)


@dataclass
class ModelSelection:
    candidates: np.ndarray
    fold_scores: np.ndarray
    selected: int


def model_select_k(coords: np.ndarray, k_max: int, folds: int = 5, seed: int = 0, **em_kwargs) -> ModelSelection:
    """Choose the component count by k-fold held-out log-likelihood (ties: fewer components)."""
    x = np.asarray(coords, dtype=float)
    if k_max < 1:
        raise SymspaceError("k_max must be at least 1")
    candidates = np.arange(1, k_max + 1)
    if k_max == 1:
        return ModelSelection(candidates, np.zeros((1, 1)), 1)
    splits = fold_indices(x.shape[0], folds, seed)

    def score(task):
        f, kk = task
        test = splits[f]
        train = np.concatenate([splits[j] for j in range(folds) if j != f])
        try:
            model = em_fit(x[train], int(kk), seed=derive_seed(seed, f, int(kk)), **em_kwargs)
        except SymspaceError:
            return -np.inf
        return float(np.mean(model.log_pdf_tangent(x[test])))

    tasks = [(f, kk) for f in range(folds) for kk in candidates]
    flat = ordered_map(score, tasks)
    scores = np.array(flat).reshape(folds, len(candidates))
    mean = scores.mean(axis=0)
    mean = np.where(np.isnan(mean), -np.inf, mean)
    return ModelSelection(candidates, scores, int(candidates[int(np.argmax(mean))]))


def save_model(model) -> str:
    return json.dumps(model.to_dict(), sort_keys=True)


def load_model(text: str):
    d = json.loads(text)
    kind = d.get("type")
    if kind == "kde":
        return KdeModel.from_dict(d)
    if kind == "mixture":
        return MixtureModel.from_dict(d)
    raise SymspaceError(f"unknown model type {kind!r}")
