"""Multiview datasets: synthetic generation, file I/O, normalization, minibatches."""
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from cvcl.errors import (
    ConfigurationError,
    DatasetFormatError,
    GenerationError,
    LabelMismatchError,
    MalformedNumericError,
    RowCountMismatchError,
)

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class MultiviewDataset:
    views: tuple
    n_clusters: int
    labels: np.ndarray = None

    def __post_init__(self):
        views = tuple(np.asarray(v, dtype=np.float64) for v in self.views)
        object.__setattr__(self, "views", views)
        if len(views) < 2:
            raise ConfigurationError(f"need at least 2 views, got {len(views)}")
        if self.n_clusters < 2:
            raise ConfigurationError(f"need at least 2 clusters, got {self.n_clusters}")
        rows = [v.shape[0] for v in views]
        if any(v.ndim != 2 for v in views):
            raise ConfigurationError("every view must be a 2-D matrix")
        if len(set(rows)) != 1:
            raise RowCountMismatchError(f"views have differing row counts {rows}")
        for i, v in enumerate(views):
            if not np.all(np.isfinite(v)):
                raise MalformedNumericError(f"view {i + 1} contains non-finite values")
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (rows[0],):
                raise RowCountMismatchError(
                    f"labels have {labels.shape[0]} rows, views have {rows[0]}"
                )
            labels = labels.astype(np.int64)
            distinct = np.unique(labels)
            if labels.min() < 0 or labels.max() >= self.n_clusters or len(distinct) != self.n_clusters:
                raise LabelMismatchError(
                    f"labels take values {distinct.tolist()} but n_clusters={self.n_clusters}"
                )
            object.__setattr__(self, "labels", labels)
        for v in views:
            v.flags.writeable = False

    @property
    def n_samples(self):
        return self.views[0].shape[0]

    @property
    def n_views(self):
        return len(self.views)

    @property
    def dims(self):
        return [v.shape[1] for v in self.views]


@dataclass
class SyntheticSpec:
    n_views: int = 2
    n_clusters: int = 3
    samples_per_cluster: int = 100
    dims_per_view: list = field(default_factory=lambda: [10, 12])
    center_separation: float = 4.0
    noise_sigma: float = 0.3
    view_disagreement: float = 0.0
    seed: int = 0

    def validate(self):
        if self.n_views < 2 or self.n_clusters < 2 or self.samples_per_cluster < 1:
            raise ConfigurationError("n_views, n_clusters >= 2 and samples_per_cluster >= 1 required")
        if len(self.dims_per_view) != self.n_views:
            raise ConfigurationError(
                f"{len(self.dims_per_view)} dims given for {self.n_views} views"
            )
        if any(d < 1 for d in self.dims_per_view):
            raise ConfigurationError("dims must be positive")
        if self.noise_sigma < 0 or self.center_separation < 0:
            raise ConfigurationError("noise_sigma and center_separation must be non-negative")
        if not 0.0 <= self.view_disagreement <= 1.0:
            raise ConfigurationError("view_disagreement must lie in [0, 1]")


def _place_centers(K, d, sep, rng, max_draws=20000):
    # centers live in a box of side 2*sep so that crowding fails loudly
    side = 2.0 * sep if sep > 0 else 1.0
    centers = []
    draws = 0
    while len(centers) < K:
        if draws >= max_draws:
            raise GenerationError(
                f"could not place {K} centers {sep} apart in {d} dimensions "
                f"after {max_draws} draws"
            )
        c = rng.uniform(0.0, side, size=d)
        draws += 1
        if all(np.linalg.norm(c - o) >= sep for o in centers):
            centers.append(c)
    return np.array(centers)


def generate_synthetic(spec):
    """Gaussian blobs per view around well-separated centers.

    In every view after the first, a ``view_disagreement`` fraction of samples
    is drawn around a wrong cluster's center.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    K, n = spec.n_clusters, spec.samples_per_cluster
    N = K * n
    labels = np.repeat(np.arange(K), n)
    labels = labels[rng.permutation(N)]
    views = []
    for v, d in enumerate(spec.dims_per_view):
        centers = _place_centers(K, d, spec.center_separation, rng)
        assigned = labels.copy()
        if v > 0 and spec.view_disagreement > 0:
            n_bad = int(round(spec.view_disagreement * N))
            bad = rng.choice(N, size=n_bad, replace=False)
            shift = rng.integers(1, K, size=n_bad)
            assigned[bad] = (assigned[bad] + shift) % K
        X = centers[assigned] + spec.noise_sigma * rng.standard_normal((N, d))
        views.append(X)
    return MultiviewDataset(tuple(views), K, labels)


def _view_file(path, v):
    return os.path.join(path, f"view_{v + 1}.csv")


def save_dataset(ds, path):
    os.makedirs(path, exist_ok=True)
    meta = {
        "n_views": ds.n_views,
        "n_samples": ds.n_samples,
        "n_clusters": ds.n_clusters,
        "dims": ds.dims,
        "has_labels": ds.labels is not None,
        "format_version": FORMAT_VERSION,
    }
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8", newline="\n") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    for v, X in enumerate(ds.views):
        with open(_view_file(path, v), "w", encoding="utf-8", newline="\n") as f:
            for row in X:
                f.write(",".join(repr(float(x)) for x in row) + "\n")
    if ds.labels is not None:
        with open(os.path.join(path, "labels.csv"), "w", encoding="utf-8", newline="\n") as f:
            f.write("".join(f"{int(y)}\n" for y in ds.labels))


def _read_matrix(fname, expected_cols):
    if not os.path.exists(fname):
        raise DatasetFormatError(f"missing file {fname}")
    rows = []
    with open(fname, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise MalformedNumericError(f"{fname}:{lineno}: {exc}") from None
            if len(row) != expected_cols:
                raise MalformedNumericError(
                    f"{fname}:{lineno}: expected {expected_cols} columns, got {len(row)}"
                )
            rows.append(row)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), expected_cols)
    if not np.all(np.isfinite(X)):
        raise MalformedNumericError(f"{fname}: non-finite value")
    return X


def load_dataset(path):
    meta_file = os.path.join(path, "meta.json")
    if not os.path.exists(meta_file):
        raise DatasetFormatError(f"missing file {meta_file}")
    try:
        with open(meta_file, encoding="utf-8") as f:
            meta = json.load(f)
        n_views = int(meta["n_views"])
        n_samples = int(meta["n_samples"])
        n_clusters = int(meta["n_clusters"])
        dims = [int(d) for d in meta["dims"]]
        has_labels = bool(meta["has_labels"])
        version = int(meta["format_version"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{meta_file}: bad or missing field ({exc})") from None
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{meta_file}: unsupported format_version {version}")
    if len(dims) != n_views:
        raise DatasetFormatError(f"{meta_file}: dims has {len(dims)} entries for {n_views} views")
    views = []
    for v in range(n_views):
        X = _read_matrix(_view_file(path, v), dims[v])
        if X.shape[0] != n_samples:
            raise RowCountMismatchError(
                f"{_view_file(path, v)} has {X.shape[0]} rows, meta.json declares {n_samples}"
            )
        views.append(X)
    labels = None
    if has_labels:
        fname = os.path.join(path, "labels.csv")
        if not os.path.exists(fname):
            raise DatasetFormatError(f"missing file {fname}")
        with open(fname, encoding="utf-8") as f:
            try:
                labels = np.array([int(s) for s in f.read().split()], dtype=np.int64)
            except ValueError as exc:
                raise MalformedNumericError(f"{fname}: {exc}") from None
        if labels.shape[0] != n_samples:
            raise RowCountMismatchError(
                f"{fname} has {labels.shape[0]} rows, meta.json declares {n_samples}"
            )
    return MultiviewDataset(tuple(views), n_clusters, labels)


def normalize(ds, mode="minmax"):
    if mode == "none":
        return ds
    out = []
    for X in ds.views:
        if mode == "minmax":
            lo, hi = X.min(axis=0), X.max(axis=0)
            span = hi - lo
            safe = np.where(span > 0, span, 1.0)
            Y = np.where(span > 0, (X - lo) / safe, 0.0)
        elif mode == "zscore":
            mu, sd = X.mean(axis=0), X.std(axis=0)
            safe = np.where(sd > 0, sd, 1.0)
            Y = np.where(sd > 0, (X - mu) / safe, 0.0)
        else:
            raise ConfigurationError(f"unknown normalization {mode!r}")
        out.append(Y)
    return MultiviewDataset(tuple(out), ds.n_clusters, ds.labels)


@dataclass(frozen=True)
class MinibatchPlan:
    batches: tuple
    batch_size: int


def plan_epoch(N, m, seed, epoch_index):
    if not 1 <= m <= N:
        raise ConfigurationError(f"batch size {m} must lie in [1, {N}]")
    rng = np.random.default_rng([seed, epoch_index])
    perm = rng.permutation(N)
    n_batches = math.ceil(N / m)
    return MinibatchPlan(tuple(perm[i * m:(i + 1) * m] for i in range(n_batches)), m)
