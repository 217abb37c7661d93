"""Pure numpy implementations of the per-batch loss kernels.

Used when the compiled ``_ckernels`` extension is unavailable, and as the
reference the compiled version is tested against.
"""
import numpy as np


def target_distribution(H, eps=1e-12):
    col = H.sum(axis=0) + eps
    U = H * H / col
    return U / U.sum(axis=1, keepdims=True)


def target_distribution_backward(H, G, eps=1e-12):
    col = H.sum(axis=0) + eps
    U = H * H / col
    r = U.sum(axis=1, keepdims=True)
    P = U / r
    # gradient w.r.t. the unnormalised sharpened values
    D = (G - (G * P).sum(axis=1, keepdims=True)) / r
    return 2.0 * D * H / col - (D * H * H).sum(axis=0) / (col * col)


def contrastive_pair(A, B, tau, grad=True):
    """Cluster-level contrastive loss between views A and B, with gradients."""
    K = A.shape[1]
    S_aa = (A.T @ A) / tau
    S_ab = (A.T @ B) / tau
    # within-view negatives exclude the diagonal
    masked = S_aa.copy()
    np.fill_diagonal(masked, -np.inf)
    M = np.maximum(masked.max(axis=0), S_ab.max(axis=0))
    E_aa = np.exp(masked - M)
    E_ab = np.exp(S_ab - M)
    T = E_aa.sum(axis=0) + E_ab.sum(axis=0)
    loss = float(np.mean(M + np.log(T) - np.diag(S_ab)))
    if not grad:
        return loss, None, None
    W_aa = E_aa / T / K
    W_ab = E_ab / T / K
    W_ab[np.diag_indices(K)] -= 1.0 / K
    dA = (A @ (W_aa + W_aa.T) + B @ W_ab.T) / tau
    dB = (A @ W_ab) / tau
    return loss, dA, dB


def consistency(P, eps=1e-12):
    m = P.shape[0]
    q = P.sum(axis=0) / m
    value = float(np.sum(np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0)))
    g = (np.log(np.maximum(q, eps)) + 1.0) / m
    return value, np.broadcast_to(g, P.shape).astype(P.dtype)
