"""Label prediction and clustering metrics (ACC, NMI, purity)."""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from cvcl.errors import UsageError
from cvcl.losses import target_distribution


def labels_from_assignments(Ps):
    """Argmax of the view-averaged soft assignments; ties go to the lowest index."""
    mean = np.mean([np.asarray(P, dtype=np.float64) for P in Ps], axis=0)
    return np.argmax(mean, axis=1)


def assignments(model, dataset, batch_size, source="P", full_target=False):
    """Per-view soft assignments over the whole dataset, in sample order.

    ``source="P"`` sharpens each evaluation batch (or the whole dataset with
    ``full_target``); ``source="H"`` returns the raw head outputs.
    """
    if source not in ("P", "H"):
        raise UsageError(f"source must be 'P' or 'H', got {source!r}")
    N = dataset.n_samples
    step = N if full_target else min(batch_size, N)
    out = [[] for _ in range(model.n_views)]
    for start in range(0, N, step):
        for v, X in enumerate(dataset.views):
            Z = model.encode(v, X[start:start + step])
            H = model.cluster_probabilities(v, Z)
            out[v].append(target_distribution(H) if source == "P" else H)
    return [np.vstack(parts) for parts in out]


def predict_labels(model, dataset, batch_size=128, source="P", full_target=False):
    return labels_from_assignments(assignments(model, dataset, batch_size, source, full_target))


def _check(pred, truth):
    pred, truth = np.asarray(pred, dtype=np.int64), np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise UsageError(f"label vectors differ in length: {pred.shape} vs {truth.shape}")
    if pred.size and (pred.min() < 0 or truth.min() < 0):
        raise UsageError("labels must be non-negative cluster ids")
    return pred, truth


def contingency(pred, truth, n_clusters=None):
    """Counts with predicted clusters on rows and true classes on columns."""
    pred, truth = _check(pred, truth)
    k = max(int(pred.max(initial=-1)), int(truth.max(initial=-1))) + 1
    if n_clusters is not None:
        k = max(k, n_clusters)
    C = np.zeros((k, k), dtype=np.int64)
    np.add.at(C, (pred, truth), 1)
    return C


def accuracy(pred, truth):
    C = contingency(pred, truth)
    rows, cols = linear_sum_assignment(C, maximize=True)
    return float(C[rows, cols].sum() / max(len(pred), 1))


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth):
    """Mutual information over the arithmetic mean of the two entropies."""
    C = contingency(pred, truth).astype(np.float64)
    n = C.sum()
    a, b = C.sum(axis=1), C.sum(axis=0)
    ha, hb = _entropy(a, n), _entropy(b, n)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    nz = C > 0
    mi = float((C[nz] / n * np.log(C[nz] * n / np.outer(a, b)[nz])).sum())
    return float(min(max(mi / ((ha + hb) / 2), 0.0), 1.0))


def purity(pred, truth):
    C = contingency(pred, truth)
    return float(C.max(axis=1).sum() / max(len(pred), 1))


@dataclass
class MetricsReport:
    acc: float
    nmi: float
    purity: float
    contingency: np.ndarray

    def as_line(self):
        return f"acc={self.acc!r} nmi={self.nmi!r} purity={self.purity!r}"

    def as_text(self):
        table = "\n".join(" ".join(f"{c:5d}" for c in row) for row in self.contingency)
        return (
            f"ACC    {self.acc:.4f}\nNMI    {self.nmi:.4f}\nPurity {self.purity:.4f}\n"
            f"contingency (rows: predicted, cols: true)\n{table}\n"
        )


def evaluate(pred, truth, n_clusters=None):
    return MetricsReport(
        accuracy(pred, truth), nmi(pred, truth), purity(pred, truth),
        contingency(pred, truth, n_clusters),
    )


def parse_metrics_line(line):
    return {k: float(v) for k, v in (tok.split("=", 1) for tok in line.split())}
