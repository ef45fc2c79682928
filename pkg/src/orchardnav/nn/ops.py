"""Latent-space ops: Gaussian reparameterization and KL to a unit normal."""
from __future__ import annotations

import numpy as np


def reparameterize(mu: np.ndarray, log_var: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """z = mu + exp(0.5 * log_var) * eps."""
    if not (mu.shape == log_var.shape == eps.shape):
        raise ValueError(f"shape mismatch: {mu.shape}, {log_var.shape}, {eps.shape}")
    return mu + np.exp(0.5 * log_var) * eps


def reparameterize_backward(log_var: np.ndarray, eps: np.ndarray,
                            dz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of z w.r.t. (mu, log_var)."""
    return dz, dz * eps * 0.5 * np.exp(0.5 * log_var)


def kl_standard_normal(mu: np.ndarray, log_var: np.ndarray) -> float:
    """KL(N(mu, exp(log_var)) || N(0, I)), summed over dims, batch-averaged."""
    if mu.shape != log_var.shape:
        raise ValueError(f"shape mismatch: {mu.shape} vs {log_var.shape}")
    per_item = -0.5 * np.sum(1.0 + log_var - mu * mu - np.exp(log_var), axis=-1)
    return float(np.mean(per_item))


def kl_standard_normal_backward(mu: np.ndarray, log_var: np.ndarray,
                                upstream: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the batch-averaged KL w.r.t. (mu, log_var)."""
    n = mu.shape[0] if mu.ndim > 1 else 1
    dmu = upstream * mu / n
    dlog_var = upstream * 0.5 * (np.exp(log_var) - 1.0) / n
    return dmu, dlog_var
