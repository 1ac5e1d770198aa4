"""Covariance descriptors of grayscale images.

Each interior pixel gets the feature vector
``(I, |dI/du|, |dI/dv|, |d2I/du2|, |d2I/dv2|)`` from central differences with
unit spacing, where ``u`` indexes columns and ``v`` rows. Features are read
at the vertices of an evenly spaced ``G x G`` interior grid and their
covariance (divided by the count) plus ``eps * I`` is the descriptor.

Images are float arrays ``img[v, u]`` with values in [0, 1]. Resizing is
left to the caller.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .exceptions import DataFormatError, SymspaceError

N_FEATURES = 5
_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


@dataclass(frozen=True)
class DescriptorConfig:
    grid: int = 32
    eps: float = 1e-8

    def __post_init__(self):
        if self.grid < 2:
            raise SymspaceError("grid size must be at least 2")
        if not self.eps > 0:
            raise SymspaceError("eps must be positive")


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    for _ in range(count):
        match = _TOKEN.match(data, pos)
        if match is None:
            raise DataFormatError("truncated PGM header")
        tokens.append(match.group(1))
        pos = match.end()
    return tokens, pos


def load_pgm(data: bytes) -> np.ndarray:
    """Decode a P2 (ASCII) or P5 (binary, 8 or 16 bit) PGM into [0, 1] floats."""
    tokens, pos = _header_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise DataFormatError(f"not a PGM file (magic {magic!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise DataFormatError("malformed PGM header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise DataFormatError("PGM dimensions or maxval out of range")
    count = width * height
    if magic == b"P2":
        body = re.sub(rb"#[^\n]*", b"", data[pos:]).split()
        if len(body) < count:
            raise DataFormatError(f"truncated PGM data: expected {count} values, found {len(body)}")
        try:
            pixels = np.array([int(t) for t in body[:count]], dtype=np.int64)
        except ValueError as exc:
            raise DataFormatError("non-integer PGM pixel") from exc
    else:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos:pos + count * dtype.itemsize]
        if len(raw) < count * dtype.itemsize:
            raise DataFormatError("truncated PGM data")
        pixels = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    if np.any(pixels < 0) or np.any(pixels > maxval):
        raise DataFormatError("PGM pixel exceeds maxval")
    return pixels.reshape(height, width) / float(maxval)


def write_pgm(img: np.ndarray, binary: bool = True, maxval: int = 255) -> bytes:
    """Encode a [0, 1] image as PGM (P5 or P2), rounding to ``maxval`` levels."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise SymspaceError("image must be two-dimensional")
    levels = np.clip(np.rint(img * maxval), 0, maxval).astype(np.int64)
    height, width = levels.shape
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        return f"P5\n{width} {height}\n{maxval}\n".encode() + levels.astype(dtype).tobytes()
    rows = "\n".join(" ".join(str(v) for v in row) for row in levels)
    return f"P2\n{width} {height}\n{maxval}\n{rows}\n".encode()


def feature_stack(img: np.ndarray) -> np.ndarray:
    """Per-pixel features on the interior, shape (H - 2, W - 2, 5)."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or min(img.shape) < 3:
        raise SymspaceError("image must be at least 3 x 3")
    centre = img[1:-1, 1:-1]
    left, right = img[1:-1, :-2], img[1:-1, 2:]
    up, down = img[:-2, 1:-1], img[2:, 1:-1]
    return np.stack([
        centre,
        np.abs(0.5 * (right - left)),
        np.abs(0.5 * (down - up)),
        np.abs(right - 2.0 * centre + left),
        np.abs(down - 2.0 * centre + up),
    ], axis=-1)


def grid_positions(size: int, grid: int) -> np.ndarray:
    """``grid`` evenly spaced interior indices in ``[1, size - 2]``."""
    return np.rint(np.linspace(1, size - 2, grid)).astype(np.int64)


def covariance_descriptor(img: np.ndarray, cfg: DescriptorConfig | None = None) -> np.ndarray:
    """5 x 5 positive definite covariance descriptor of an image."""
    cfg = cfg or DescriptorConfig()
    img = np.asarray(img, dtype=float)
    feats = feature_stack(img)
    height, width = img.shape
    if cfg.grid > height - 2 or cfg.grid > width - 2:
        raise SymspaceError(f"a {cfg.grid} x {cfg.grid} grid does not fit in the {width - 2} x {height - 2} interior")
    rows = grid_positions(height, cfg.grid) - 1
    cols = grid_positions(width, cfg.grid) - 1
    sample = feats[np.ix_(rows, cols)].reshape(-1, N_FEATURES)
    centred = sample - sample.mean(axis=0)
    cov = centred.T @ centred / sample.shape[0]
    return 0.5 * (cov + cov.T) + cfg.eps * np.eye(N_FEATURES)
