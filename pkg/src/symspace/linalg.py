"""Dense linear algebra for small real symmetric and complex matrices.

Everything here works on stacks of matrices: the trailing two axes hold the
matrix and any leading axes are treated as a batch. The symmetric
eigensolver is a cyclic Jacobi iteration vectorised across the batch, which
is plenty for the orders used by the library (m <= 25) and gives
eigenvectors that are orthogonal to machine precision.

Vectorisation of symmetric matrices uses the orthonormal basis for the
Frobenius inner product::

    sym_vec(X) = (X_11, ..., X_mm, sqrt(2) X_12, sqrt(2) X_13, ..., sqrt(2) X_(m-1)m)

so that ``sym_vec(X) @ sym_vec(Y) == trace(X @ Y)``.
"""

from __future__ import annotations

import io
from typing import NamedTuple

import numpy as np

from .exceptions import ConvergenceError, DataFormatError, NotPositiveDefiniteError, TangentTooLargeError

MAX_SWEEPS = 100
EXP_LIMIT = 700.0
PD_RELATIVE_TOLERANCE = 1e-12
SQRT2 = np.sqrt(2.0)


class EigenDecomposition(NamedTuple):
    """Eigenvalues sorted in descending order and matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return compose(self.eigenvalues, self.eigenvectors)


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return ``(A + A^T) / 2`` as a float array."""
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def compose(eigenvalues: np.ndarray, eigenvectors: np.ndarray) -> np.ndarray:
    """Return ``V diag(w) V^T`` (batched), exactly symmetric."""
    out = (eigenvectors * eigenvalues[..., None, :]) @ np.swapaxes(eigenvectors, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def sym_eig(s: np.ndarray) -> EigenDecomposition:
    """Eigendecomposition of real symmetric matrices by cyclic Jacobi rotations.

    Parameters
    ----------
    s : array_like, shape (..., m, m)
        Symmetric matrices. The input is symmetrised first.

    Returns
    -------
    EigenDecomposition
        ``eigenvalues`` of shape (..., m) in descending order and orthogonal
        ``eigenvectors`` of shape (..., m, m) whose column k belongs to
        eigenvalue k.

    Raises
    ------
    ConvergenceError
        If the off-diagonal mass has not vanished after ``MAX_SWEEPS`` sweeps.
    """
    a = symmetrize(s)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    batch_shape = a.shape[:-2]
    m = a.shape[-1]
    a = a.reshape((-1, m, m)).copy()
    v = np.broadcast_to(np.eye(m), a.shape).copy()
    scale = np.sqrt(np.sum(a * a, axis=(-2, -1)))
    threshold = (1e-15 * scale) ** 2
    upper = np.triu_indices(m, 1)

    for _ in range(MAX_SWEEPS):
        off = np.sum(a[:, upper[0], upper[1]] ** 2, axis=-1)
        if np.all(off <= threshold):
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                _rotate(a, v, p, q)
    else:
        raise ConvergenceError(f"Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps")

    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(-w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[:, None, :], axis=-1)
    return EigenDecomposition(w.reshape(batch_shape + (m,)), v.reshape(batch_shape + (m, m)))


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    """Annihilate a[:, p, q] in place with one Jacobi rotation per batch item."""
    apq = a[:, p, q]
    active = apq != 0.0
    if not np.any(active):
        return
    app = a[:, p, p]
    aqq = a[:, q, q]
    # a tiny apq overflows theta to inf, which correctly gives t = 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        theta = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
        t = np.where(active, np.copysign(1.0, theta) / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
    c = 1.0 / np.hypot(t, 1.0)
    sn = t * c

    col_p = a[:, :, p].copy()
    col_q = a[:, :, q].copy()
    a[:, :, p] = c[:, None] * col_p - sn[:, None] * col_q
    a[:, :, q] = sn[:, None] * col_p + c[:, None] * col_q
    row_p = a[:, p, :].copy()
    row_q = a[:, q, :].copy()
    a[:, p, :] = c[:, None] * row_p - sn[:, None] * row_q
    a[:, q, :] = sn[:, None] * row_p + c[:, None] * row_q
    a[:, p, p] = app - t * apq
    a[:, q, q] = aqq + t * apq
    a[:, p, q] = 0.0
    a[:, q, p] = 0.0

    vp = v[:, :, p].copy()
    vq = v[:, :, q].copy()
    v[:, :, p] = c[:, None] * vp - sn[:, None] * vq
    v[:, :, q] = sn[:, None] * vp + c[:, None] * vq


def pd_tolerance(eigenvalues: np.ndarray) -> np.ndarray:
    """Scale-relative positivity threshold for a stack of spectra."""
    return PD_RELATIVE_TOLERANCE * (np.max(np.abs(eigenvalues), axis=-1) + 1.0)


def is_positive_definite(p: np.ndarray) -> np.ndarray:
    w = sym_eig(p).eigenvalues
    return w[..., -1] > pd_tolerance(w)


def check_positive_definite(p: np.ndarray) -> EigenDecomposition:
    """Eigendecompose ``p`` and raise unless every matrix is positive definite."""
    eig = sym_eig(p)
    w = eig.eigenvalues
    if not np.all(w[..., -1] > pd_tolerance(w)):
        raise NotPositiveDefiniteError("not positive definite")
    return eig


def mat_fn(s: np.ndarray, fn) -> np.ndarray:
    """Apply a scalar function to symmetric matrices through their spectrum."""
    eig = sym_eig(s)
    return compose(fn(eig.eigenvalues), eig.eigenvectors)


def mat_exp(x: np.ndarray) -> np.ndarray:
    """Matrix exponential of symmetric matrices.

    Raises ``TangentTooLargeError`` when an eigenvalue exceeds 700, beyond
    which ``exp`` overflows double precision.
    """
    eig = sym_eig(x)
    if np.any(eig.eigenvalues[..., 0] > EXP_LIMIT):
        raise TangentTooLargeError("tangent vector too large")
    return compose(np.exp(eig.eigenvalues), eig.eigenvectors)


def mat_log(p: np.ndarray) -> np.ndarray:
    """Principal matrix logarithm of positive definite matrices."""
    eig = check_positive_definite(p)
    return compose(np.log(eig.eigenvalues), eig.eigenvectors)


def mat_sqrt(p: np.ndarray) -> np.ndarray:
    eig = check_positive_definite(p)
    return compose(np.sqrt(eig.eigenvalues), eig.eigenvectors)


def mat_inv_sqrt(p: np.ndarray) -> np.ndarray:
    eig = check_positive_definite(p)
    return compose(1.0 / np.sqrt(eig.eigenvalues), eig.eigenvectors)


def sym_dim(m: int) -> int:
    """Dimension m(m+1)/2 of the space of m x m symmetric matrices."""
    return m * (m + 1) // 2


def sym_order(d: int) -> int:
    """Inverse of :func:`sym_dim`; raises if ``d`` is not triangular."""
    m = int(round((np.sqrt(8 * d + 1) - 1) / 2))
    if sym_dim(m) != d:
        raise ValueError(f"{d} is not of the form m(m+1)/2")
    return m


def sym_vec(x: np.ndarray) -> np.ndarray:
    """Orthonormal coordinates of symmetric matrices, shape (..., m(m+1)/2)."""
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    iu = np.triu_indices(m, 1)
    return np.concatenate(
        [np.diagonal(x, axis1=-2, axis2=-1), SQRT2 * x[..., iu[0], iu[1]]], axis=-1
    )


def sym_unvec(v: np.ndarray, m: int | None = None) -> np.ndarray:
    """Inverse of :func:`sym_vec` (off-diagonals exact to one rounding)."""
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    if m is None:
        m = sym_order(d)
    if sym_dim(m) != d:
        raise ValueError(f"vector of length {d} does not match order {m}")
    out = np.zeros(v.shape[:-1] + (m, m))
    idx = np.arange(m)
    out[..., idx, idx] = v[..., :m]
    iu = np.triu_indices(m, 1)
    off = v[..., m:] / SQRT2
    out[..., iu[0], iu[1]] = off
    out[..., iu[1], iu[0]] = off
    return out


def cholesky(p: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor of positive definite matrices."""
    try:
        return np.linalg.cholesky(symmetrize(p))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("not positive definite") from exc


def logdet_pd(p: np.ndarray) -> np.ndarray:
    """log det of positive definite matrices via Cholesky."""
    chol = cholesky(p)
    return 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)


def complex_eig_2x2(z: np.ndarray) -> np.ndarray:
    """Eigenvalues of a complex 1x1 or 2x2 matrix from its characteristic quadratic.

    Returned sorted by real part, then imaginary part.
    """
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0:
        z = z.reshape(1, 1)
    if z.shape == (1, 1):
        return z.reshape(1).copy()
    if z.shape != (2, 2):
        raise ValueError("complex eigenvalues are only available for orders 1 and 2")
    half_tr = 0.5 * (z[0, 0] + z[1, 1])
    det = z[0, 0] * z[1, 1] - z[0, 1] * z[1, 0]
    root = np.sqrt(half_tr * half_tr - det)
    big = half_tr + root if abs(half_tr + root) >= abs(half_tr - root) else half_tr - root
    # Vieta for the smaller root avoids cancellation.
    small = det / big if big != 0 else 0.0 + 0.0j
    vals = np.array([big, small], dtype=complex)
    order = np.lexsort((vals.imag, vals.real))
    return vals[order]


def read_matrix_csv(text: str) -> np.ndarray:
    """Parse the ``m=<order>`` CSV matrix format."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("m="):
        raise DataFormatError("matrix file must start with 'm=<order>'")
    try:
        m = int(lines[0][2:])
    except ValueError as exc:
        raise DataFormatError(f"bad order line {lines[0]!r}") from exc
    if len(lines) != m + 1:
        raise DataFormatError(f"expected {m} matrix rows, found {len(lines) - 1}")
    try:
        rows = [[float(tok) for tok in ln.split(",")] for ln in lines[1:]]
    except ValueError as exc:
        raise DataFormatError("non-numeric matrix entry") from exc
    if any(len(r) != m for r in rows):
        raise DataFormatError(f"every row must have {m} entries")
    return np.array(rows)


def write_matrix_csv(a: np.ndarray) -> str:
    a = np.asarray(a, dtype=float)
    buf = io.StringIO()
    buf.write(f"m={a.shape[0]}\n")
    for row in a:
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()
