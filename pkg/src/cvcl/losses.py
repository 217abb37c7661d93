"""Objective terms: sharpened targets, cluster-column contrast, balance
regularizer, reconstruction, and their weighted sum, each with gradients."""
from dataclasses import dataclass

import numpy as np

from cvcl import kernels
from cvcl.errors import ConfigurationError, UsageError

EPS = 1e-12


@dataclass
class LossWeights:
    alpha: float = 0.01
    beta: float = 0.01
    tau: float = 0.5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigurationError("alpha and beta must be non-negative")
        if self.tau <= 0:
            raise ConfigurationError("tau must be positive")


def target_distribution(H):
    """Square and column-normalise the soft assignments, then renormalise rows."""
    return kernels.target_distribution(H, EPS)


def target_distribution_grad(H, dP):
    return kernels.target_distribution_backward(H, dP, EPS)


def column_similarity(p_a, p_b):
    p_a, p_b = np.asarray(p_a), np.asarray(p_b)
    if p_a.shape != p_b.shape or p_a.ndim != 1:
        raise UsageError(f"columns must be equal-length vectors, got {p_a.shape} and {p_b.shape}")
    return float(p_a @ p_b)


def _check_pair(P1, P2, tau):
    if P1.ndim != 2 or P1.shape != P2.shape:
        raise UsageError(f"assignment matrices differ in shape: {P1.shape} vs {P2.shape}")
    if P1.shape[1] == 0:
        raise UsageError("assignment matrices need at least one cluster column")
    if tau <= 0:
        raise UsageError("tau must be positive")


def pairwise_contrastive_loss(P1, P2, tau):
    """Contrastive loss of view 1's columns against view 2's (not symmetric)."""
    P1, P2 = np.asarray(P1), np.asarray(P2)
    _check_pair(P1, P2, tau)
    return kernels.contrastive_pair(P1, P2, tau, grad=False)[0]


def pairwise_contrastive_grad(P1, P2, tau):
    P1, P2 = np.asarray(P1), np.asarray(P2)
    _check_pair(P1, P2, tau)
    return kernels.contrastive_pair(P1, P2, tau, grad=True)


def _check_views(Ps):
    if len(Ps) < 2:
        raise UsageError(f"cross-view loss needs at least 2 views, got {len(Ps)}")
    if len({np.shape(P) for P in Ps}) != 1:
        raise UsageError("all views' assignment matrices must share a shape")


def cross_view_contrastive_loss(Ps, tau):
    _check_views(Ps)
    total = 0.0
    for a, Pa in enumerate(Ps):
        for b, Pb in enumerate(Ps):
            if a != b:
                total += pairwise_contrastive_loss(Pa, Pb, tau)
    return 0.5 * total


def cross_view_contrastive_grad(Ps, tau):
    """Half-sum over ordered view pairs; returns ``(loss, [dP per view])``."""
    _check_views(Ps)
    total = 0.0
    grads = [np.zeros_like(P) for P in Ps]
    for a, Pa in enumerate(Ps):
        for b, Pb in enumerate(Ps):
            if a == b:
                continue
            l, dA, dB = kernels.contrastive_pair(Pa, Pb, tau, grad=True)
            total += l
            grads[a] += 0.5 * dA
            grads[b] += 0.5 * dB
    return 0.5 * total, grads


def consistency_regularizer(Ps):
    return float(sum(kernels.consistency(P, EPS)[0] for P in Ps))


def consistency_grad(Ps):
    vals, grads = zip(*(kernels.consistency(P, EPS) for P in Ps))
    return float(sum(vals)), list(grads)


def reconstruction_loss(Xs, Xts, mean=False):
    if len(Xs) != len(Xts):
        raise UsageError("reconstruction needs one output per input view")
    total = 0.0
    for X, Xt in zip(Xs, Xts):
        if np.shape(X) != np.shape(Xt):
            raise UsageError(f"reconstruction shape {np.shape(Xt)} differs from input {np.shape(X)}")
        total += float(np.sum((np.asarray(Xt) - X) ** 2)) / (len(X) if mean else 1)
    return total


def reconstruction_grad(Xs, Xts, mean=False):
    loss = reconstruction_loss(Xs, Xts, mean)
    return loss, [2.0 * (Xt - X) / (len(X) if mean else 1) for X, Xt in zip(Xs, Xts)]


def fine_tune_loss(Xs, Xts, Ps, weights, mean_recon=False):
    """Total loss and its ``(L_pre, L_c, L_a)`` components."""
    l_pre = reconstruction_loss(Xs, Xts, mean_recon)
    l_c = cross_view_contrastive_loss(Ps, weights.tau)
    l_a = consistency_regularizer(Ps)
    return l_pre + weights.alpha * l_c + weights.beta * l_a, (l_pre, l_c, l_a)


def fine_tune_grad(Xs, Xts, Hs, weights, mean_recon=False, detach_target=False):
    """Gradients of the total loss w.r.t. reconstructions and head outputs.

    With ``detach_target`` the sharpening step is passed straight through
    (its Jacobian replaced by the identity).
    """
    Ps = [target_distribution(H) for H in Hs]
    l_pre, dXts = reconstruction_grad(Xs, Xts, mean_recon)
    l_c, dPc = cross_view_contrastive_grad(Ps, weights.tau)
    l_a, dPa = consistency_grad(Ps)
    dHs = []
    for H, gc, ga in zip(Hs, dPc, dPa):
        dP = weights.alpha * gc + weights.beta * ga
        dHs.append(dP if detach_target else target_distribution_grad(H, dP))
    total = l_pre + weights.alpha * l_c + weights.beta * l_a
    return total, (l_pre, l_c, l_a), dXts, dHs, Ps
