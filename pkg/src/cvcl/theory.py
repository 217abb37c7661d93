"""Randomised checks of the contrastive loss lower bound and of the optimality
of strictly aligned (block one-hot) assignments."""
import math
from dataclasses import dataclass, field

import numpy as np

from cvcl.errors import ConfigurationError
from cvcl.losses import pairwise_contrastive_loss


def contrastive_lower_bound(K, m, tau):
    """Lower bound ``(2K - 1) exp(-m / tau)`` on the pairwise contrastive loss."""
    if K < 1 or m < 1 or tau <= 0:
        raise ConfigurationError("need K >= 1, m >= 1 and tau > 0")
    return math.exp(math.log(2 * K - 1) - m / tau)


def build_strictly_aligned(cluster_sizes):
    sizes = [int(s) for s in cluster_sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise ConfigurationError("cluster sizes must be positive")
    P = np.zeros((sum(sizes), len(sizes)))
    P[np.arange(sum(sizes)), np.repeat(np.arange(len(sizes)), sizes)] = 1.0
    return P


def random_assignments(n, m, K, rng):
    """``n`` row-stochastic m x K matrices whose rows range from near one-hot
    to near uniform (Dirichlet rows with a log-uniform concentration)."""
    conc = np.exp(rng.uniform(np.log(0.05), np.log(5.0), size=(n, m, 1)))
    G = rng.gamma(np.broadcast_to(conc, (n, m, K)))
    G += 1e-300
    return G / G.sum(axis=2, keepdims=True)


def random_assignment(m, K, rng):
    return random_assignments(1, m, K, rng)[0]


def perturb(P, rng):
    """Mix ``P`` with a random row-stochastic matrix by a uniform random weight."""
    lam = rng.uniform(0.0, 1.0)
    R = rng.dirichlet(np.ones(P.shape[1]), size=P.shape[0])
    return (1.0 - lam) * P + lam * R


@dataclass
class BoundSweepReport:
    checks: int = 0
    violations: list = field(default_factory=list)
    min_margin: float = math.inf  # smallest (loss - bound) seen

    @property
    def ok(self):
        return not self.violations


def sweep_lower_bound(K_values, m_values, taus, trials, seed=0):
    if trials < 1:
        raise ConfigurationError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    report = BoundSweepReport()
    for K in K_values:
        for m in m_values:
            for tau in taus:
                bound = contrastive_lower_bound(K, m, tau)
                As = random_assignments(trials, m, K, rng)
                Bs = random_assignments(trials, m, K, rng)
                for A, B in zip(As, Bs):
                    l = pairwise_contrastive_loss(A, B, tau)
                    report.checks += 1
                    report.min_margin = min(report.min_margin, l - bound)
                    if not l >= bound:
                        report.violations.append((K, m, tau, l, bound))
    return report


@dataclass
class AlignmentReport:
    cluster_sizes: tuple
    tau: float
    aligned_loss: float
    min_perturbed_same: float  # min over l(P', P')
    min_perturbed_cross: float  # min over l(P, P')
    bound: float

    @property
    def aligned_is_minimum(self):
        return self.aligned_loss <= min(self.min_perturbed_same, self.min_perturbed_cross)

    @property
    def gap_to_bound(self):
        return self.aligned_loss - self.bound


def verify_strict_alignment_minimality(cluster_sizes, tau, n_trials, seed=0):
    if n_trials < 1:
        raise ConfigurationError("n_trials must be at least 1")
    rng = np.random.default_rng(seed)
    P = build_strictly_aligned(cluster_sizes)
    aligned = pairwise_contrastive_loss(P, P, tau)
    same, cross = math.inf, math.inf
    for _ in range(n_trials):
        Q = perturb(P, rng)
        same = min(same, pairwise_contrastive_loss(Q, Q, tau))
        cross = min(cross, pairwise_contrastive_loss(P, Q, tau))
    return AlignmentReport(
        tuple(int(s) for s in cluster_sizes), tau, aligned, same, cross,
        contrastive_lower_bound(P.shape[1], P.shape[0], tau),
    )
