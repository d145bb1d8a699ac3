"""Soft-target construction: sharpening, peer-averaged pseudo-labels, the
confidence-weighted label blend, and the batch-uniformity penalty.

All operations accept a single probability vector or a row-wise batch.
"""

from __future__ import annotations

import numpy as np

from .validation import check_simplex

_CLAMP = 1e-12


def sharpen(p, temperature: float):
    """Temperature-scale a categorical distribution: p_i^(1/T), renormalized.

    T = 1 returns the input unchanged; T < 1 concentrates mass on the larger
    entries. Computed in log space; exact zeros stay zero.
    """
    t = float(temperature)
    if t <= 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    p = check_simplex(p, "p")
    if t == 1.0:
        return p.copy()
    logs = np.full_like(p, -np.inf)
    positive = p > 0.0
    logs[positive] = np.log(p[positive]) / t
    logs -= logs.max(axis=-1, keepdims=True)
    out = np.exp(logs)
    return out / out.sum(axis=-1, keepdims=True)


def pseudo_label(p_self, p_peer, temperature: float):
    """Sharpened average of the two peers' predicted distributions."""
    p_self = check_simplex(p_self, "p_self")
    p_peer = check_simplex(p_peer, "p_peer")
    return sharpen((p_self + p_peer) / 2.0, temperature)


def refurbish(observed, pseudo, w):
    """Confidence-weighted blend w*observed + (1-w)*pseudo, renormalized.

    w may be a scalar or a per-row vector for batched inputs; every value must
    lie in [0, 1]. At w = 0 or w = 1 the corresponding input is returned
    exactly.
    """
    observed = check_simplex(observed, "observed")
    pseudo = check_simplex(pseudo, "pseudo")
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("confidence w must be in [0, 1]")
    if observed.ndim == 2 and w.ndim == 1:
        w = w[:, None]
    out = w * observed + (1.0 - w) * pseudo
    out /= out.sum(axis=-1, keepdims=True)
    # boundary weights return the corresponding input bit for bit; interior
    # weights get the renormalized blend
    at_one = np.broadcast_to(w == 1.0, out.shape)
    at_zero = np.broadcast_to(w == 0.0, out.shape)
    return np.where(at_one, observed, np.where(at_zero, pseudo, out))


def uniformity_reg(batch_mean_pred) -> float:
    """Divergence of the batch-mean prediction from the uniform prior.

    Zero iff the mean prediction is uniform; grows as the batch collapses
    toward any one class.
    """
    p = check_simplex(batch_mean_pred, "batch_mean_pred")
    if p.ndim != 1:
        raise ValueError("batch_mean_pred must be a single distribution")
    c = p.shape[0]
    u = 1.0 / c
    return float(np.sum(u * (np.log(u) - np.log(np.clip(p, _CLAMP, None)))))
