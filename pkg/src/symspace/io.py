"""Text formats for points, datasets and parameters.

Point files are CSV with a header row and one point per row; lines starting
with ``#`` are comments::

    label,m,x11,x12,...,xmm          pd:<m>      full row-major matrix
    label,m,re11,...,remm,im11,...   siegel:<m>  real parts then imaginary parts
    label,d,x1,...,xd                poincare:<d>, euclidean:<d>

The second column repeats the order (or dimension) on every row. For
``pd:<m>`` this is exactly the classification dataset format. Unlabelled
points are written with label 1.
"""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .distributions import LogGaussian
from .exceptions import DataFormatError, SymspaceError
from .manifolds import Manifold, PositiveDefinite, SiegelDisk


def header(manifold: Manifold) -> list[str]:
    if isinstance(manifold, PositiveDefinite):
        m = manifold.m
        return ["label", "m"] + [f"x{i + 1}{j + 1}" for i in range(m) for j in range(m)]
    if isinstance(manifold, SiegelDisk):
        m = manifold.m
        cells = [f"{i + 1}{j + 1}" for i in range(m) for j in range(m)]
        return ["label", "m"] + [f"re{c}" for c in cells] + [f"im{c}" for c in cells]
    return ["label", "d"] + [f"x{i + 1}" for i in range(manifold.dim)]


def _order(manifold: Manifold) -> int:
    return manifold.chart_shape[-1] if len(manifold.chart_shape) == 2 else manifold.dim


def _row_values(manifold: Manifold, x: np.ndarray) -> list[float]:
    if isinstance(manifold, SiegelDisk):
        return list(np.real(x).reshape(-1)) + list(np.imag(x).reshape(-1))
    return list(np.asarray(x, dtype=float).reshape(-1))


def write_points_csv(manifold: Manifold, points: np.ndarray, labels=None) -> str:
    points = np.asarray(points)
    points = points.reshape((-1,) + manifold.chart_shape)
    labels = np.ones(len(points), dtype=np.int64) if labels is None else np.asarray(labels)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header(manifold))
    order = _order(manifold)
    for label, x in zip(labels, points):
        writer.writerow([int(label), order] + [repr(float(v)) for v in _row_values(manifold, x)])
    return buf.getvalue()


def read_points_csv(manifold: Manifold, text: str, validate: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Parse a point file; returns ``(points, labels)``."""
    order = _order(manifold)
    width = 2 * order * order if isinstance(manifold, SiegelDisk) else int(np.prod(manifold.chart_shape))
    points, labels = [], []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip():
            continue
        if row[0].strip().lower() == "label" or row[0].lstrip().startswith("#"):
            continue
        try:
            label = int(row[0])
            declared = int(row[1])
            values = np.array([float(t) for t in row[2:]])
        except (ValueError, IndexError) as exc:
            raise DataFormatError(f"line {lineno}: could not parse row") from exc
        if declared != order:
            raise DataFormatError(f"line {lineno}: order {declared} does not match {manifold.name}")
        if values.size != width:
            raise DataFormatError(f"line {lineno}: expected {width} values, found {values.size}")
        if not np.all(np.isfinite(values)):
            raise DataFormatError(f"line {lineno}: non-finite value")
        if isinstance(manifold, SiegelDisk):
            half = order * order
            points.append((values[:half] + 1j * values[half:]).reshape(order, order))
        else:
            points.append(values.reshape(manifold.chart_shape))
        labels.append(label)
    dtype = complex if isinstance(manifold, SiegelDisk) else float
    arr = np.array(points, dtype=dtype).reshape((-1,) + manifold.chart_shape)
    if validate and len(arr):
        try:
            arr = manifold.validate(arr)
        except SymspaceError as exc:
            raise DataFormatError(f"invalid point for {manifold.name}: {exc}") from exc
    return arr, np.array(labels, dtype=np.int64)


def read_params(text: str) -> LogGaussian:
    """Parse ``{"manifold": ..., "mu": [...], "sigma": [[...]]}``."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"parameter file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise DataFormatError("parameter file must hold a JSON object")
    try:
        return LogGaussian.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise DataFormatError(f"invalid parameters: {exc}") from exc


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"
