"""Non-compact symmetric spaces with exponential/log maps at the base point.

Each manifold stores points in its natural chart and tangent vectors at the
identity element ``e`` as coordinates in a fixed orthonormal frame, so the
Euclidean norm of a tangent vector is the geodesic distance from ``e`` to
its image under ``exp``. All methods accept stacks: leading axes are batch
axes.

The volume factor ``J(x)`` is the density of the push-forward of tangent
Lebesgue measure with respect to the Riemannian measure. It lies in (0, 1]
and a tangent density ``g`` pushes forward to ``g(log x) * J(x)``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from . import linalg
from .exceptions import ChartError, SymspaceError, TangentTooLargeError, UnsupportedError

BALL_MARGIN = 1e-12


def log_a_over_sinh(a: np.ndarray) -> np.ndarray:
    """Numerically stable ``log(a / sinh(a))`` for ``a >= 0`` (0 at a = 0)."""
    a = np.abs(np.asarray(a, dtype=float))
    small = a < 1e-3
    safe = np.where(small, 1.0, a)
    # log sinh(a) = a - log 2 + log1p(-exp(-2a))
    big = np.log(safe) - safe + math.log(2.0) - np.log1p(-np.exp(-2.0 * safe))
    a2 = a * a
    series = -a2 / 6.0 + a2 * a2 / 180.0
    return np.where(small, series, big)


def _x_over_tanh_inv(x: np.ndarray) -> np.ndarray:
    """atanh(x) / x with the removable singularity at 0 filled in."""
    small = np.abs(x) < 1e-6
    safe = np.where(small, 0.5, x)
    return np.where(small, 1.0 + x * x / 3.0, np.arctanh(safe) / safe)


def _tanh_over_x(x: np.ndarray) -> np.ndarray:
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 3.0, np.tanh(safe) / safe)


class Manifold(ABC):
    """Interface shared by all supported symmetric spaces."""

    #: tangent / manifold dimension
    dim: int

    @property
    @abstractmethod
    def name(self) -> str:
        """Selection string, e.g. ``"pd:2"``."""

    @property
    @abstractmethod
    def chart_shape(self) -> tuple[int, ...]:
        """Trailing shape of a single point in chart coordinates."""

    @abstractmethod
    def identity(self) -> np.ndarray:
        """The base point ``e``."""

    @abstractmethod
    def exp(self, v: np.ndarray) -> np.ndarray:
        """Riemannian exponential at ``e`` of tangent coordinates ``v``."""

    @abstractmethod
    def log(self, x: np.ndarray) -> np.ndarray:
        """Riemannian logarithm at ``e``; inverse of :meth:`exp`."""

    @abstractmethod
    def log_volume_factor_tangent(self, v: np.ndarray) -> np.ndarray:
        """``log J(exp v)`` evaluated directly from tangent coordinates."""

    @abstractmethod
    def validate(self, x: np.ndarray) -> np.ndarray:
        """Return ``x`` as an array or raise :class:`ChartError`."""

    @abstractmethod
    def metric(self, x: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Riemannian inner product of chart-coordinate tangent vectors at ``x``."""

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise UnsupportedError(f"geodesic distance is not available on {self.name}")

    def log_volume_factor(self, x: np.ndarray) -> np.ndarray:
        return self.log_volume_factor_tangent(self.log(x))

    def volume_factor(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.log_volume_factor(x))

    def random_tangent(self, rng: np.random.Generator, size: int, max_norm: float) -> np.ndarray:
        """Directions uniform on the sphere with norms uniform in [0, max_norm]."""
        v = rng.normal(size=(size, self.dim))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        return v * rng.uniform(0.0, max_norm, size=(size, 1))

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Euclidean(Manifold):
    """Flat space R^d; exp and log are the identity and J == 1."""

    dim: int

    @property
    def name(self) -> str:
        return f"euclidean:{self.dim}"

    @property
    def chart_shape(self) -> tuple[int, ...]:
        return (self.dim,)

    def identity(self) -> np.ndarray:
        return np.zeros(self.dim)

    def exp(self, v):
        return np.array(v, dtype=float)

    def log(self, x):
        return np.array(self.validate(x), dtype=float)

    def log_volume_factor_tangent(self, v):
        return np.zeros(np.shape(v)[:-1])

    def validate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,) or not np.all(np.isfinite(x)):
            raise ChartError(f"expected finite points of dimension {self.dim}")
        return x

    def metric(self, x, u, w):
        return np.sum(u * w, axis=-1)

    def distance(self, x, y):
        return np.linalg.norm(self.validate(x) - self.validate(y), axis=-1)


@dataclass(frozen=True)
class PositiveDefinite(Manifold):
    """PD(m) with the affine-invariant metric ``tr(S^-1 U S^-1 V)``.

    Tangent coordinates are :func:`linalg.sym_vec` of the matrix logarithm.
    """

    m: int

    @property
    def dim(self) -> int:
        return linalg.sym_dim(self.m)

    @property
    def name(self) -> str:
        return f"pd:{self.m}"

    @property
    def chart_shape(self) -> tuple[int, ...]:
        return (self.m, self.m)

    def identity(self) -> np.ndarray:
        return np.eye(self.m)

    def exp(self, v):
        return linalg.mat_exp(linalg.sym_unvec(v, self.m))

    def log(self, x):
        return linalg.sym_vec(linalg.mat_log(self.validate(x)))

    def log_volume_factor_tangent(self, v):
        mu = linalg.sym_eig(linalg.sym_unvec(v, self.m)).eigenvalues
        return self._log_j_from_log_eigenvalues(mu)

    def log_volume_factor(self, x):
        w = linalg.check_positive_definite(self.validate(x)).eigenvalues
        return self._log_j_from_log_eigenvalues(np.log(w))

    @staticmethod
    def _log_j_from_log_eigenvalues(mu: np.ndarray) -> np.ndarray:
        m = mu.shape[-1]
        iu = np.triu_indices(m, 1)
        a = 0.5 * np.abs(mu[..., iu[0]] - mu[..., iu[1]])
        return np.sum(log_a_over_sinh(a), axis=-1)

    def validate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-2:] != (self.m, self.m):
            raise ChartError(f"expected {self.m}x{self.m} matrices, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ChartError("matrix has non-finite entries")
        if not np.all(linalg.is_positive_definite(x)):
            raise ChartError("matrix is not positive definite")
        return linalg.symmetrize(x)

    def metric(self, x, u, w):
        xinv = np.linalg.inv(x)
        return np.trace(xinv @ u @ xinv @ w, axis1=-2, axis2=-1)

    def distance(self, x, y):
        """Affine-invariant distance via the pencil ``L^-1 y L^-T`` with ``x = L L^T``."""
        x = self.validate(x)
        y = self.validate(y)
        chol = linalg.cholesky(x)
        eye = np.broadcast_to(np.eye(self.m), chol.shape)
        linv = np.linalg.solve(chol, eye)
        pencil = linv @ y @ np.swapaxes(linv, -1, -2)
        w = linalg.check_positive_definite(pencil).eigenvalues
        return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))

    def log_riemannian_volume_density(self, x: np.ndarray) -> np.ndarray:
        """``log d(mu_g)/d(Lebesgue)`` with Lebesgue measure on the entries X_ij, i <= j.

        Subtract this from a Riemannian log-density to get a density in the
        entry coordinates used by the Wishart family.
        """
        m = self.m
        return 0.25 * m * (m - 1) * math.log(2.0) - 0.5 * (m + 1) * linalg.logdet_pd(x)


@dataclass(frozen=True)
class PoincareBall(Manifold):
    """Unit ball with metric ``4 |dx|^2 / (1 - |x|^2)^2`` (curvature -1)."""

    dim: int

    @property
    def name(self) -> str:
        return f"poincare:{self.dim}"

    @property
    def chart_shape(self) -> tuple[int, ...]:
        return (self.dim,)

    def identity(self) -> np.ndarray:
        return np.zeros(self.dim)

    def exp(self, v):
        v = np.asarray(v, dtype=float)
        r = np.linalg.norm(v, axis=-1, keepdims=True)
        x = v * _tanh_over_x(0.5 * r) * 0.5
        if np.any(np.linalg.norm(x, axis=-1) >= 1.0 - BALL_MARGIN):
            raise TangentTooLargeError("tangent vector too large for the ball chart")
        return x

    def log(self, x):
        x = self.validate(x)
        rho = np.linalg.norm(x, axis=-1, keepdims=True)
        return 2.0 * x * _x_over_tanh_inv(rho)

    def log_volume_factor_tangent(self, v):
        r = np.linalg.norm(v, axis=-1)
        return (self.dim - 1) * log_a_over_sinh(r)

    def validate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,) or not np.all(np.isfinite(x)):
            raise ChartError(f"expected finite points of dimension {self.dim}")
        if np.any(np.linalg.norm(x, axis=-1) >= 1.0 - BALL_MARGIN):
            raise ChartError("point lies outside the open unit ball")
        return x

    def metric(self, x, u, w):
        conf = 2.0 / (1.0 - np.sum(x * x, axis=-1))
        return conf * conf * np.sum(u * w, axis=-1)

    def distance(self, x, y):
        x = self.validate(x)
        y = self.validate(y)
        num = np.sum((x - y) ** 2, axis=-1)
        den = (1.0 - np.sum(x * x, axis=-1)) * (1.0 - np.sum(y * y, axis=-1))
        # acosh(1 + 2 t) == 2 asinh(sqrt(t))
        return 2.0 * np.arcsinh(np.sqrt(num / den))


def _hermitian_fn(h: np.ndarray, fn) -> np.ndarray:
    """f(H) for Hermitian H through the real symmetric embedding [[Re, -Im], [Im, Re]]."""
    m = h.shape[-1]
    re, im = h.real, h.imag
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    emb = np.concatenate([top, bottom], axis=-2)
    f = linalg.mat_fn(emb, fn)
    return f[..., :m, :m] + 1j * f[..., m:, :m]


def _hermitian_eigenvalues(h: np.ndarray) -> np.ndarray:
    """Eigenvalues of Hermitian matrices, descending (each appears twice in the embedding)."""
    re, im = h.real, h.imag
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    w = linalg.sym_eig(np.concatenate([top, bottom], axis=-2)).eigenvalues
    return w[..., 0::2]


def siegel_log_volume_factor(lam: np.ndarray) -> np.ndarray:
    """log J on the Siegel disk from the radial parameters ``lam`` (any order m).

    ``J = prod_{i<j} (l_i - l_j)/sinh(l_i - l_j) * prod_{i<=j} (l_i + l_j)/sinh(l_i + l_j)``
    """
    lam = np.asarray(lam, dtype=float)
    m = lam.shape[-1]
    iu = np.triu_indices(m, 1)
    ii = np.triu_indices(m, 0)
    diff = lam[..., iu[0]] - lam[..., iu[1]]
    tot = lam[..., ii[0]] + lam[..., ii[1]]
    return np.sum(log_a_over_sinh(diff), axis=-1) + np.sum(log_a_over_sinh(tot), axis=-1)


@dataclass(frozen=True)
class SiegelDisk(Manifold):
    """Siegel disk of complex symmetric m x m matrices with ``Z* Z < I``.

    The metric is ``4 tr((I - Z Z*)^-1 dZ (I - Z* Z)^-1 dZ*)``, which for
    m = 1 is the Poincare disk. Tangent coordinates at 0 are
    ``2 * (sym_vec(Re T), sym_vec(Im T))`` for a symmetric complex direction
    ``T``. The radial parameters entering J are ``atanh`` of the singular
    values of Z (for m = 1 and real spectra these are ``atanh(eig(Z))``).
    """

    m: int

    @property
    def dim(self) -> int:
        return self.m * (self.m + 1)

    @property
    def name(self) -> str:
        return f"siegel:{self.m}"

    @property
    def chart_shape(self) -> tuple[int, ...]:
        return (self.m, self.m)

    def identity(self) -> np.ndarray:
        return np.zeros((self.m, self.m), dtype=complex)

    def _require_small(self) -> None:
        if self.m > 2:
            raise UnsupportedError("Siegel exp/log are only supported for m <= 2")

    def _direction(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        half = linalg.sym_dim(self.m)
        if v.shape[-1] != 2 * half:
            raise ValueError(f"expected tangent vectors of length {2 * half}")
        re = linalg.sym_unvec(v[..., :half], self.m)
        im = linalg.sym_unvec(v[..., half:], self.m)
        return 0.5 * (re + 1j * im)

    def _coords(self, t: np.ndarray) -> np.ndarray:
        t = 0.5 * (t + np.swapaxes(t, -1, -2))
        return 2.0 * np.concatenate([linalg.sym_vec(t.real), linalg.sym_vec(t.imag)], axis=-1)

    def exp(self, v):
        self._require_small()
        t = self._direction(v)
        gram = np.conj(np.swapaxes(t, -1, -2)) @ t
        # Z = T g(T*T) with g(mu) = tanh(sqrt mu) / sqrt mu
        z = t @ _hermitian_fn(gram, lambda mu: _tanh_over_x(np.sqrt(np.clip(mu, 0.0, None))))
        z = 0.5 * (z + np.swapaxes(z, -1, -2))
        sv = np.sqrt(np.clip(_hermitian_eigenvalues(np.conj(np.swapaxes(z, -1, -2)) @ z), 0.0, None))
        if np.any(sv[..., 0] >= 1.0 - BALL_MARGIN):
            raise TangentTooLargeError("tangent vector too large for the disk chart")
        return z

    def log(self, x):
        self._require_small()
        z = self.validate(x)
        gram = np.conj(np.swapaxes(z, -1, -2)) @ z
        t = z @ _hermitian_fn(gram, lambda mu: _x_over_tanh_inv(np.sqrt(np.clip(mu, 0.0, None))))
        return self._coords(t)

    def singular_values(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        gram = np.conj(np.swapaxes(z, -1, -2)) @ z
        return np.sqrt(np.clip(_hermitian_eigenvalues(gram), 0.0, None))

    def log_volume_factor(self, x):
        z = self.validate(x)
        return siegel_log_volume_factor(np.arctanh(self.singular_values(z)))

    def log_volume_factor_tangent(self, v):
        t = self._direction(v)
        return siegel_log_volume_factor(self.singular_values(t))

    def validate(self, x):
        z = np.asarray(x, dtype=complex)
        if z.shape[-2:] != (self.m, self.m) or not np.all(np.isfinite(z)):
            raise ChartError(f"expected finite complex {self.m}x{self.m} matrices")
        if np.max(np.abs(z - np.swapaxes(z, -1, -2)), initial=0.0) > 1e-10 * (1.0 + np.max(np.abs(z), initial=0.0)):
            raise ChartError("Siegel disk points must be complex symmetric")
        if np.any(self.singular_values(z)[..., 0] >= 1.0 - BALL_MARGIN):
            raise ChartError("largest singular value must be below 1")
        return z

    def metric(self, x, u, w):
        z = np.asarray(x, dtype=complex)
        eye = np.eye(self.m)
        zh = np.conj(np.swapaxes(z, -1, -2))
        left = np.linalg.inv(eye - z @ zh)
        right = np.linalg.inv(eye - zh @ z)
        val = np.trace(left @ u @ right @ np.conj(np.swapaxes(w, -1, -2)), axis1=-2, axis2=-1)
        return 4.0 * val.real

    def distance(self, x, y):
        if self.m != 1:
            raise UnsupportedError("Siegel geodesic distance is only available for m = 1")
        zx = self.validate(x)[..., 0, 0]
        zy = self.validate(y)[..., 0, 0]
        ball = PoincareBall(2)
        return ball.distance(np.stack([zx.real, zx.imag], -1), np.stack([zy.real, zy.imag], -1))


def manifold_from_string(spec: str) -> Manifold:
    """Parse ``pd:<m>``, ``poincare:<d>``, ``siegel:<m>`` or ``euclidean:<d>``."""
    kinds = {
        "pd": PositiveDefinite,
        "poincare": PoincareBall,
        "siegel": SiegelDisk,
        "euclidean": Euclidean,
    }
    kind, sep, size = spec.strip().partition(":")
    if not sep or kind not in kinds:
        raise SymspaceError(f"unknown manifold {spec!r}; expected one of pd:, poincare:, siegel:, euclidean:")
    try:
        n = int(size)
    except ValueError as exc:
        raise SymspaceError(f"bad manifold size in {spec!r}") from exc
    if n < 1:
        raise SymspaceError("manifold size must be at least 1")
    return kinds[kind](n)


def numeric_volume_factor(manifold: Manifold, v: np.ndarray, step: float = 1e-4) -> float:
    """Finite-difference estimate of ``J(exp v)``, independent of the closed forms.

    Central differences of ``exp`` along each orthonormal tangent direction
    give chart-coordinate pushforwards ``D_j``; their Gram matrix under the
    chart metric at ``x = exp(v)`` has determinant ``1 / J(x)^2``.
    """
    if not 1e-6 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-6, 1e-3]")
    v = np.asarray(v, dtype=float)
    basis = np.eye(manifold.dim)
    forward = manifold.exp(v + step * basis)
    backward = manifold.exp(v - step * basis)
    d = (forward - backward) / (2.0 * step)
    x = manifold.exp(v)
    gram = manifold.metric(x, d[:, None], d[None, :])
    gram = 0.5 * (gram + gram.T)
    w = np.linalg.eigvalsh(gram)
    if w[0] <= 0.0:
        raise SymspaceError("degenerate pushforward Gram matrix; change the step size")
    return float(np.exp(-0.5 * np.sum(np.log(w))))


def log_euclidean_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``|| log x - log y ||_F`` for positive definite matrices."""
    diff = linalg.mat_log(x) - linalg.mat_log(y)
    return np.sqrt(np.sum(diff * diff, axis=(-2, -1)))
