"""Parametric distributions: Gaussian, log-Gaussian, Wishart and inverse Wishart.

Random numbers come from numpy's PCG64 bit generator seeded with a 64-bit
integer; normal variates are produced from its uniforms by the Box-Muller
transform so that streams are reproducible from the seed alone.

Log-Gaussian densities are with respect to the Riemannian volume measure.
Wishart-family densities are with respect to Lebesgue measure on the matrix
entries ``X_ij, i <= j`` (the textbook convention); use
:meth:`PositiveDefinite.log_riemannian_volume_density` to convert.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .exceptions import NotPositiveDefiniteError, SymspaceError, TangentTooLargeError
from .manifolds import Manifold, manifold_from_string

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
MAX_RESAMPLE = 100


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for an unsigned 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal variates by the Box-Muller transform."""
    size = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(size, dtype=np.int64))
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1]
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * math.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:count].reshape(size)


def multigammaln(a: float, m: int) -> float:
    """log of the multivariate gamma function Gamma_m(a)."""
    if a <= 0.5 * (m - 1):
        raise ValueError(f"multivariate gamma needs a > (m-1)/2, got a={a}, m={m}")
    return 0.25 * m * (m - 1) * math.log(math.pi) + sum(math.lgamma(a - 0.5 * j) for j in range(m))


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal N(mean, cov)."""

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        try:
            chol = linalg.cholesky(cov)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError("covariance is singular or not positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", linalg.symmetrize(cov))
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_pdf(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        diff = (z - self.mean).reshape(-1, self.dim)
        white = np.linalg.solve(self.chol, diff.T).T
        logdet = 2.0 * np.sum(np.log(np.diag(self.chol)))
        out = -0.5 * (self.dim * LOG_2PI + logdet + np.sum(white * white, axis=-1))
        return out.reshape(z.shape[:-1])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + standard_normal(rng, (n, self.dim)) @ self.chol.T


@dataclass(frozen=True, eq=False)
class LogGaussian:
    """Push-forward of N(mean, cov) on the tangent space at ``e`` through ``exp``."""

    manifold: Manifold
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        gauss = Gaussian(self.mean, self.cov)
        if gauss.dim != self.manifold.dim:
            raise ValueError(f"mean has length {gauss.dim} but {self.manifold.name} has dimension {self.manifold.dim}")
        object.__setattr__(self, "mean", gauss.mean)
        object.__setattr__(self, "cov", gauss.cov)
        object.__setattr__(self, "_tangent", gauss)

    @property
    def tangent(self) -> Gaussian:
        return self._tangent

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        """Log-density w.r.t. the Riemannian measure: ``log N(log x) + log J(x)``."""
        v = self.manifold.log(x)
        return self._tangent.log_pdf(v) + self.manifold.log_volume_factor_tangent(v)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` points; draws whose exp overflows are redrawn (at most 100 rounds)."""
        return self._draw(n, rng)[1]

    def sample_tangent(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._draw(n, rng)[0]

    def _draw(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        z = self._tangent.sample(n, rng)
        for attempt in range(MAX_RESAMPLE + 1):
            try:
                return z, self.manifold.exp(z)
            except TangentTooLargeError:
                if attempt == MAX_RESAMPLE:
                    break
            bad = self._overflowing(z)
            logger.warning("resampling %d draws that overflow exp", int(np.sum(bad)))
            z[bad] = self._tangent.sample(int(np.sum(bad)), rng)
        raise TangentTooLargeError("could not draw representable samples after 100 retries")

    def _overflowing(self, z: np.ndarray) -> np.ndarray:
        bad = np.zeros(len(z), dtype=bool)
        for i, row in enumerate(z):
            try:
                self.manifold.exp(row)
            except TangentTooLargeError:
                bad[i] = True
        return bad

    def to_dict(self) -> dict:
        return {"manifold": self.manifold.name, "mu": self.mean.tolist(), "sigma": self.cov.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "LogGaussian":
        try:
            return cls(manifold_from_string(data["manifold"]), np.asarray(data["mu"], float), np.asarray(data["sigma"], float))
        except KeyError as exc:
            raise SymspaceError(f"parameter file is missing key {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "LogGaussian":
        return cls.from_dict(json.loads(text))


def _check_square_pd(scale: np.ndarray) -> np.ndarray:
    scale = linalg.symmetrize(np.atleast_2d(np.asarray(scale, dtype=float)))
    linalg.check_positive_definite(scale)
    return scale


@dataclass(frozen=True, eq=False)
class Wishart:
    """Wishart W_m(scale, dof) with density on the upper-triangular entries."""

    scale: np.ndarray
    dof: float

    def __post_init__(self):
        scale = _check_square_pd(self.scale)
        m = scale.shape[0]
        if not self.dof > m - 1:
            raise ValueError(f"Wishart needs dof > m - 1 = {m - 1}, got {self.dof}")
        object.__setattr__(self, "scale", scale)

    @property
    def m(self) -> int:
        return self.scale.shape[0]

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        m, nu = self.m, float(self.dof)
        x = np.asarray(x, dtype=float)
        scale_inv = np.linalg.inv(self.scale)
        const = -0.5 * nu * m * math.log(2.0) - 0.5 * nu * float(linalg.logdet_pd(self.scale)) - multigammaln(0.5 * nu, m)
        return (
            0.5 * (nu - m - 1) * linalg.logdet_pd(x)
            - 0.5 * np.einsum("ij,...ji->...", scale_inv, x)
            + const
        )

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        m, nu = self.m, float(self.dof)
        chol = linalg.cholesky(self.scale)
        if nu == int(nu):
            g = standard_normal(rng, (n, int(nu), m)) @ chol.T
            return linalg.symmetrize(np.einsum("nki,nkj->nij", g, g))
        # Bartlett decomposition for fractional degrees of freedom.
        a = np.zeros((n, m, m))
        for i in range(m):
            a[:, i, i] = np.sqrt(rng.chisquare(nu - i, size=n))
            a[:, i, :i] = standard_normal(rng, (n, i))
        la = chol @ a
        return linalg.symmetrize(la @ np.swapaxes(la, -1, -2))

    def mean(self) -> np.ndarray:
        return self.dof * self.scale


@dataclass(frozen=True, eq=False)
class InverseWishart:
    """Inverse Wishart W^-1_m(scale, dof): X^-1 ~ W_m(scale^-1, dof)."""

    scale: np.ndarray
    dof: float

    def __post_init__(self):
        scale = _check_square_pd(self.scale)
        m = scale.shape[0]
        if not self.dof > m - 1:
            raise ValueError(f"inverse Wishart needs dof > m - 1 = {m - 1}, got {self.dof}")
        object.__setattr__(self, "scale", scale)

    @property
    def m(self) -> int:
        return self.scale.shape[0]

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        m, nu = self.m, float(self.dof)
        x = np.asarray(x, dtype=float)
        const = 0.5 * nu * float(linalg.logdet_pd(self.scale)) - 0.5 * nu * m * math.log(2.0) - multigammaln(0.5 * nu, m)
        xinv = np.linalg.inv(x)
        return (
            -0.5 * (nu + m + 1) * linalg.logdet_pd(x)
            - 0.5 * np.einsum("ij,...ji->...", self.scale, xinv)
            + const
        )

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        inner = Wishart(np.linalg.inv(self.scale), self.dof).sample(n, rng)
        return linalg.symmetrize(np.linalg.inv(inner))

    def mean(self) -> np.ndarray:
        if not self.dof > self.m + 1:
            raise ValueError("inverse Wishart mean is finite only for dof > m + 1")
        return self.scale / (self.dof - self.m - 1)
