"""Two-stage training: autoencoder pretraining, then joint fine-tuning."""
import csv
import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from cvcl import losses
from cvcl.core import Optimizer, OptimizerConfig
from cvcl.data import plan_epoch
from cvcl.errors import ConfigurationError, NonFiniteError
from cvcl.losses import LossWeights
from cvcl.metrics import evaluate, predict_labels
from cvcl.model import CvclModel, ModelConfig

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    pretrain_epochs: int = 200
    finetune_epochs: int = 100
    batch_size: int = 128
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    detach_target: bool = False
    mean_recon: bool = False
    clip_norm: float = 0.0

    def validate(self, n_samples=None):
        if self.pretrain_epochs < 0 or self.finetune_epochs < 0:
            raise ConfigurationError("epoch counts must be non-negative")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be at least 2")
        if n_samples is not None and self.batch_size > n_samples:
            raise ConfigurationError(
                f"batch_size {self.batch_size} exceeds the {n_samples} samples available"
            )
        if self.clip_norm < 0:
            raise ConfigurationError("clip_norm must be non-negative")


@dataclass
class TrainReport:
    pretrain: list = field(default_factory=list)  # L_pre per epoch
    finetune: list = field(default_factory=list)  # (L_fine, L_pre, L_c, L_a) per epoch
    wall_time: float = 0.0
    checkpoint: str = None

    def rows(self):
        for e, l_pre in enumerate(self.pretrain):
            yield ("pretrain", e, l_pre, l_pre, 0.0, 0.0)
        for e, comps in enumerate(self.finetune):
            yield ("finetune", e, *comps)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["stage", "epoch", "L_fine", "L_pre", "L_c", "L_a"])
            for stage, e, *vals in self.rows():
                w.writerow([stage, e, *(repr(float(x)) for x in vals)])


def _views_for(dataset, idx, dtype):
    return [np.ascontiguousarray(X[idx], dtype=dtype) for X in dataset.views]


def _check_finite(value, stage, epoch, batch):
    if not np.isfinite(value):
        raise NonFiniteError(f"non-finite loss in {stage} epoch {epoch} batch {batch}")


def _step(store, opt, clip_norm):
    if clip_norm:
        store.clip_grad_norm(clip_norm)
    opt.step()


def batch_objective(model, Xs, weights, recon_weight=1.0, mean_recon=False,
                    detach_target=False, backward=True):
    """Fine-tuning loss on one row-aligned batch; accumulates parameter
    gradients into ``model.store`` when ``backward`` is set.

    ``recon_weight`` scales the reconstruction term, so the contrastive and
    balance terms can be isolated (``recon_weight=0``).
    """
    _, Xts, Hs = model.forward_all(Xs, cache=backward)
    if not backward:
        Ps = [losses.target_distribution(H) for H in Hs]
        _, comps = losses.fine_tune_loss(Xs, Xts, Ps, weights, mean_recon)
        return recon_weight * comps[0] + weights.alpha * comps[1] + weights.beta * comps[2], comps
    _, comps, dXts, dHs, _ = losses.fine_tune_grad(
        Xs, Xts, Hs, weights, mean_recon, detach_target
    )
    for v in range(model.n_views):
        model.backward_view(v, recon_weight * dXts[v], dHs[v])
    return recon_weight * comps[0] + weights.alpha * comps[1] + weights.beta * comps[2], comps


def pretrain(model, dataset, config, report=None, epoch_offset=0):
    """Minimise reconstruction error only; cluster heads are left untouched."""
    config.validate(dataset.n_samples)
    report = report if report is not None else TrainReport()
    store = model.autoencoder_params()
    opt = Optimizer(store, config.optimizer)
    for epoch in range(config.pretrain_epochs):
        plan = plan_epoch(dataset.n_samples, config.batch_size, config.seed, epoch_offset + epoch)
        batch_losses = []
        for b, idx in enumerate(plan.batches):
            Xs = _views_for(dataset, idx, model.dtype)
            store.zero_grad()
            _, Xts, _ = model.forward_all(Xs, heads=False)
            l_pre, dXts = losses.reconstruction_grad(Xs, Xts, config.mean_recon)
            _check_finite(l_pre, "pretrain", epoch, b)
            for v, dXt in enumerate(dXts):
                model.backward_view(v, dXt)
            _step(store, opt, config.clip_norm)
            batch_losses.append(l_pre)
        report.pretrain.append(float(np.mean(batch_losses)))
    return report


def finetune(model, dataset, config, report=None, epoch_offset=None):
    config.validate(dataset.n_samples)
    report = report if report is not None else TrainReport()
    if model.n_clusters > config.batch_size:
        warnings.warn(
            f"batch size {config.batch_size} is smaller than the {model.n_clusters} clusters",
            RuntimeWarning,
            stacklevel=2,
        )
    store = model.store
    opt = Optimizer(store, config.optimizer)
    # shuffles continue the epoch count of stage 1
    if epoch_offset is None:
        epoch_offset = config.pretrain_epochs
    for epoch in range(config.finetune_epochs):
        plan = plan_epoch(dataset.n_samples, config.batch_size, config.seed, epoch_offset + epoch)
        rows = []
        for b, idx in enumerate(plan.batches):
            Xs = _views_for(dataset, idx, model.dtype)
            store.zero_grad()
            total, comps = batch_objective(
                model, Xs, config.weights, mean_recon=config.mean_recon,
                detach_target=config.detach_target,
            )
            _check_finite(total, "finetune", epoch, b)
            _step(store, opt, config.clip_norm)
            rows.append((total, *comps))
        report.finetune.append(tuple(float(x) for x in np.mean(rows, axis=0)))
    return report


def run_full(dataset, model_config=None, train_config=None, predict_kw=None):
    """Pretrain, fine-tune, predict. Returns ``(model, report, labels, metrics)``;
    metrics is None for unlabeled data."""
    model_config = model_config or ModelConfig()
    train_config = train_config or TrainConfig()
    train_config.validate(dataset.n_samples)
    t0 = time.perf_counter()
    model = CvclModel(dataset.dims, dataset.n_clusters, model_config, seed=train_config.seed)
    report = TrainReport()
    pretrain(model, dataset, train_config, report)
    finetune(model, dataset, train_config, report)
    report.wall_time = time.perf_counter() - t0
    kw = {"batch_size": train_config.batch_size}
    kw.update(predict_kw or {})
    labels = predict_labels(model, dataset, **kw)
    metrics = evaluate(labels, dataset.labels, dataset.n_clusters) if dataset.labels is not None else None
    log.info("training finished in %.1fs", report.wall_time)
    return model, report, labels, metrics
