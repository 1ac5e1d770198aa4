"""Density-based classifiers on manifold-valued data.

Four classifiers share one posterior rule ``p(y=k|x) ∝ p(y=k) p(x|y=k)``:

* ``GNB``  diagonal Gaussian naive Bayes on vectorised chart coordinates;
* ``GKC``  isotropic Gaussian kernel density per class on the same coordinates;
* ``LGNB`` and ``LGKC``  the same two models on log-mapped tangent coordinates.

For the log kinds the class-conditional density on the manifold carries the
volume factor ``J(x)``. It is common to every class and cancels in the
posterior, so it is left out unless ``include_volume=True`` is requested.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import io as symio
from .distributions import LOG_2PI, make_rng
from .estimators import _gaussian_kernel_scores, _logsumexp, _pairwise_sqdist, _select, chart_vectors, \
    default_bandwidth_grid, fold_indices
from .exceptions import DataFormatError, SymspaceError
from .manifolds import Manifold, PositiveDefinite, manifold_from_string
from .parallel import ordered_map

KINDS = ("GNB", "GKC", "LGNB", "LGKC")
VAR_FLOOR_SCALE = 1e-9


@dataclass(eq=False)
class LabeledDataset:
    """Points in a manifold chart with integer labels ``1..L``."""

    manifold: Manifold
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points)
        labels = np.asarray(self.labels)
        if points.shape[0] == 0:
            raise SymspaceError("dataset is empty")
        if labels.shape != (points.shape[0],):
            raise SymspaceError("need exactly one label per point")
        if not np.all(labels == np.round(labels)) or np.any(labels < 1):
            raise SymspaceError("labels must be integers 1..L")
        self.points = self.manifold.validate(points)
        self.labels = labels.astype(np.int64)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def n_classes(self) -> int:
        return int(self.labels.max())

    def subset(self, index: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.manifold, self.points[index], self.labels[index])


@dataclass(eq=False)
class ClassifierModel:
    manifold: Manifold
    kind: str
    priors: np.ndarray
    means: np.ndarray | None = None
    variances: np.ndarray | None = None
    class_data: list[np.ndarray] = field(default_factory=list)
    bandwidth: float | None = None

    @property
    def n_classes(self) -> int:
        return self.priors.size

    @property
    def uses_log(self) -> bool:
        return self.kind in ("LGNB", "LGKC")

    def features(self, points: np.ndarray) -> np.ndarray:
        return feature_map(self.manifold, points, self.uses_log)

    def to_dict(self) -> dict:
        out = {"type": "classifier", "manifold": self.manifold.name, "kind": self.kind,
               "priors": self.priors.tolist()}
        if self.kind in ("GNB", "LGNB"):
            out["means"] = self.means.tolist()
            out["variances"] = self.variances.tolist()
        else:
            out["h"] = self.bandwidth
            out["class_data"] = [c.tolist() for c in self.class_data]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierModel":
        manifold = manifold_from_string(d["manifold"])
        priors = np.asarray(d["priors"], dtype=float)
        if d["kind"] in ("GNB", "LGNB"):
            return cls(manifold, d["kind"], priors, means=np.asarray(d["means"], dtype=float),
                       variances=np.asarray(d["variances"], dtype=float))
        return cls(manifold, d["kind"], priors, class_data=[np.asarray(c, dtype=float) for c in d["class_data"]],
                   bandwidth=float(d["h"]))


@dataclass
class EvalReport:
    accuracy: float
    brier: float
    confusion: np.ndarray
    posteriors: np.ndarray

    def to_dict(self, include_posteriors: bool = False) -> dict:
        out = {"accuracy": self.accuracy, "brier": self.brier, "confusion": self.confusion.tolist()}
        if include_posteriors:
            out["posteriors"] = self.posteriors.tolist()
        return out


def feature_map(manifold: Manifold, points: np.ndarray, use_log: bool) -> np.ndarray:
    """``Vec(X)`` or ``Vec(log X)`` in orthonormal coordinates."""
    return manifold.log(manifold.validate(points)) if use_log else chart_vectors(manifold, points)


def _class_counts(labels: np.ndarray, n_classes: int) -> np.ndarray:
    return np.bincount(labels - 1, minlength=n_classes)


def pooled_bandwidth_cv(class_features: list[np.ndarray], grid: np.ndarray | None = None, folds: int = 5,
                        seed: int = 0) -> float:
    """One Gaussian-kernel bandwidth for all classes.

    Each class gets its own k-fold split; the held-out mean log-densities are
    averaged over folds and then over classes with weights ``n_k``. Classes
    too small to split are skipped.
    """
    if grid is None:
        centred = np.concatenate([f - f.mean(axis=0) for f in class_features])
        grid = default_bandwidth_grid(centred)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0 or np.any(~(grid > 0)):
        raise SymspaceError("bandwidth grid must be nonempty and positive")
    usable = [(k, f) for k, f in enumerate(class_features) if f.shape[0] >= 2 * folds]
    if not usable:
        raise SymspaceError(f"every class has fewer than {2 * folds} points; pass a bandwidth explicitly")

    def class_scores(item) -> np.ndarray:
        k, f = item
        splits = fold_indices(f.shape[0], folds, seed + k)
        rows = []
        for j in range(folds):
            train = np.concatenate([splits[i] for i in range(folds) if i != j])
            sq = _pairwise_sqdist(f[splits[j]], f[train])
            rows.append([np.mean(_gaussian_kernel_scores(sq, float(h), f.shape[-1])) for h in grid])
        return np.mean(rows, axis=0)

    scores = np.array(ordered_map(class_scores, usable))
    weights = np.array([f.shape[0] for _, f in usable], dtype=float)
    pooled = (weights @ scores) / weights.sum()
    return _select(grid, pooled[None, :], prefer_large=True)


def fit(kind: str, data: LabeledDataset, h: float | None = None, folds: int = 5, seed: int = 0) -> ClassifierModel:
    """Fit one of ``GNB``, ``GKC``, ``LGNB``, ``LGKC``.

    Naive Bayes variances are maximum likelihood (divide by ``n_k``) and
    floored at ``1e-9 * (pooled feature variance + 1)``. Kernel classifiers
    without ``h`` choose one by pooled per-class cross-validation.
    """
    if kind not in KINDS:
        raise SymspaceError(f"unknown classifier {kind!r}; expected one of {KINDS}")
    n_classes = data.n_classes
    counts = _class_counts(data.labels, n_classes)
    if np.any(counts == 0):
        missing = [k + 1 for k in np.flatnonzero(counts == 0)]
        raise SymspaceError(f"classes {missing} have no training points")
    feats = feature_map(data.manifold, data.points, kind in ("LGNB", "LGKC"))
    priors = counts / counts.sum()
    per_class = [feats[data.labels == k + 1] for k in range(n_classes)]
    if kind in ("GNB", "LGNB"):
        if np.any(counts < 2):
            raise SymspaceError("naive Bayes needs at least two points per class")
        floor = VAR_FLOOR_SCALE * (feats.var(axis=0) + 1.0)
        means = np.array([f.mean(axis=0) for f in per_class])
        variances = np.maximum(np.array([f.var(axis=0) for f in per_class]), floor)
        return ClassifierModel(data.manifold, kind, priors, means=means, variances=variances)
    if h is None:
        h = pooled_bandwidth_cv(per_class, folds=folds, seed=seed)
    if not h > 0:
        raise SymspaceError("bandwidth must be positive")
    return ClassifierModel(data.manifold, kind, priors, class_data=per_class, bandwidth=float(h))


def class_log_likelihoods(model: ClassifierModel, points: np.ndarray, include_volume: bool = False) -> np.ndarray:
    """``log p(x|y=k)`` for every point and class, shape (n, L)."""
    z = model.features(points)
    if model.kind in ("GNB", "LGNB"):
        diff = z[:, None, :] - model.means[None, :, :]
        out = -0.5 * np.sum(LOG_2PI + np.log(model.variances)[None] + diff * diff / model.variances[None], axis=-1)
    else:
        out = np.column_stack([
            _gaussian_kernel_scores(_pairwise_sqdist(z, c), model.bandwidth, z.shape[-1]) for c in model.class_data
        ])
    if include_volume and model.uses_log:
        out = out + model.manifold.log_volume_factor_tangent(z)[:, None]
    return out


def predict_posteriors(model: ClassifierModel, points: np.ndarray, include_volume: bool = False) -> np.ndarray:
    """Posterior class probabilities, shape (n, L); rows sum to one."""
    points = np.asarray(points)
    single = points.shape == model.manifold.chart_shape
    batch = points[None] if single else points
    with np.errstate(divide="ignore"):
        log_joint = class_log_likelihoods(model, batch, include_volume) + np.log(model.priors)[None]
    post = np.exp(log_joint - _logsumexp(log_joint, axis=1)[:, None])
    return post[0] if single else post


def brier_score(posteriors: np.ndarray, labels: np.ndarray) -> float:
    """``(1/n) sum_i sum_k (p_ik - 1{y_i = k})^2`` for labels in ``1..L``."""
    posteriors = np.atleast_2d(np.asarray(posteriors, dtype=float))
    labels = np.asarray(labels)
    if np.any(labels < 1) or np.any(labels > posteriors.shape[1]):
        raise SymspaceError("label outside 1..L")
    onehot = np.zeros_like(posteriors)
    onehot[np.arange(labels.size), labels - 1] = 1.0
    return float(np.mean(np.sum((posteriors - onehot) ** 2, axis=1)))


def report_from_posteriors(posteriors: np.ndarray, labels: np.ndarray) -> EvalReport:
    posteriors = np.atleast_2d(np.asarray(posteriors, dtype=float))
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise SymspaceError("test set is empty")
    brier = brier_score(posteriors, labels)
    predicted = np.argmax(posteriors, axis=1)  # first maximum, i.e. smallest class index
    n_classes = posteriors.shape[1]
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels - 1, predicted), 1)
    return EvalReport(float(np.trace(confusion) / labels.size), brier, confusion, posteriors)


def evaluate(model: ClassifierModel, test: LabeledDataset) -> EvalReport:
    if np.any(test.labels > model.n_classes):
        raise SymspaceError("test labels outside the classes seen in training")
    return report_from_posteriors(predict_posteriors(model, test.points), test.labels)


def split(data: LabeledDataset, fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified seeded split; ``round(fraction * n_k)`` points of each class go to training."""
    if not 0.0 < fraction < 1.0:
        raise SymspaceError("fraction must lie in (0, 1)")
    rng = make_rng(seed)
    train, test = [], []
    for k in range(1, data.n_classes + 1):
        idx = np.flatnonzero(data.labels == k)
        if idx.size == 0:
            continue
        idx = idx[rng.permutation(idx.size)]
        n_train = int(math.floor(fraction * idx.size + 0.5))
        if n_train == 0 or n_train == idx.size:
            raise SymspaceError(f"split would leave class {k} empty on one side")
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return data.subset(np.sort(np.concatenate(train))), data.subset(np.sort(np.concatenate(test)))


def read_dataset_csv(text: str) -> LabeledDataset:
    """Parse rows ``label, m, X_11, X_12, ..., X_mm`` (full row-major matrices).

    A header row starting with ``label`` is skipped.
    """
    for row in csv.reader(io.StringIO(text)):
        if row and "".join(row).strip() and row[0].strip().lower() != "label" \
                and not row[0].lstrip().startswith("#"):
            try:
                m = int(row[1])
            except (ValueError, IndexError) as exc:
                raise DataFormatError("could not read the matrix order from the first row") from exc
            if m < 1:
                raise DataFormatError("matrix order must be positive")
            break
    else:
        raise DataFormatError("dataset has no rows")
    manifold = PositiveDefinite(m)
    points, labels = symio.read_points_csv(manifold, text)
    return LabeledDataset(manifold, points, labels)


def write_dataset_csv(points: np.ndarray, labels: np.ndarray) -> str:
    points = np.asarray(points, dtype=float)
    return symio.write_points_csv(PositiveDefinite(points.shape[-1]), points, labels)
