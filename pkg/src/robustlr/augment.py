"""Feature-space augmentation: weak Gaussian jitter, strong jitter + masking.

The weak transform feeds loss modeling and pseudo-labeling; the strong one
(larger jitter, then per-coordinate zero masking) feeds learning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AugPolicy:
    weak_sigma: float = 0.1
    strong_sigma: float = 0.3
    strong_mask_prob: float = 0.15

    def __post_init__(self):
        if self.weak_sigma < 0 or self.strong_sigma < 0:
            raise ValueError("augmentation sigmas must be >= 0")
        if not 0.0 <= self.strong_mask_prob <= 1.0:
            raise ValueError("strong_mask_prob must be in [0, 1]")


def weak_aug(x: np.ndarray, policy: AugPolicy, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. Gaussian noise with std weak_sigma."""
    if policy.weak_sigma == 0.0:
        return np.array(x, dtype=np.float64, copy=True)
    return np.asarray(x, dtype=np.float64) + policy.weak_sigma * rng.standard_normal(np.shape(x))


def strong_aug(x: np.ndarray, policy: AugPolicy, rng: np.random.Generator) -> np.ndarray:
    """Gaussian jitter with std strong_sigma, then zero each coordinate
    independently with probability strong_mask_prob."""
    out = np.array(x, dtype=np.float64, copy=True)
    if policy.strong_sigma > 0.0:
        out += policy.strong_sigma * rng.standard_normal(out.shape)
    if policy.strong_mask_prob > 0.0:
        keep = rng.random(out.shape) >= policy.strong_mask_prob
        out *= keep
    return out
