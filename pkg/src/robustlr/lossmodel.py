"""Per-example loss modeling and clean-label confidence estimation.

Losses against observed labels are min-max normalized, a two-component 1-D
Gaussian mixture is fit by EM, and the posterior of the smaller-mean
component is the per-example clean-label confidence w.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .augment import AugPolicy, weak_aug
from .net import LOG_EPS, MlpParams, forward, softmax
from .validation import as_rng, check_finite

# lower bound on component variances of the loss mixture, in normalized-loss
# units. Confident models pile most clean losses into a near-point-mass at 0;
# an unbounded fit collapses the clean component onto that spike and assigns
# every moderately-fit clean example to the noisy side. Keeping the clean
# component at least ~3% of the loss range wide keeps the posterior crossover
# out of the clean tail.
VAR_FLOOR = 1e-3


@dataclass
class LossVector:
    """Raw per-example losses plus their min-max normalization to [0, 1]."""

    raw: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_raw(cls, raw) -> "LossVector":
        raw = check_finite(np.asarray(raw, dtype=np.float64), "losses")
        if raw.ndim != 1 or raw.size == 0:
            raise ValueError("losses must be a non-empty 1-D array")
        if np.any(raw < 0):
            raise ValueError("losses must be non-negative")
        lo, hi = raw.min(), raw.max()
        if hi - lo > 1e-12 * max(1.0, hi):
            normalized = (raw - lo) / (hi - lo)
        else:
            # degenerate: losses identical up to float noise; min-max would
            # amplify rounding error into the full [0, 1] range
            normalized = np.zeros_like(raw)
        return cls(raw, normalized)

    def __len__(self) -> int:
        return len(self.raw)


@dataclass
class Gmm2:
    """Two-component 1-D Gaussian mixture, components sorted by mean.

    The smaller-mean component is the "clean" one. A degenerate fit (no
    spread in the input) keeps both means equal and is flagged so callers can
    fall back to a neutral confidence.
    """

    mean_clean: float
    mean_noisy: float
    var_clean: float
    var_noisy: float
    weight_clean: float
    weight_noisy: float
    converged: bool
    iterations: int
    final_log_likelihood: float
    degenerate: bool = False
    ll_history: list[float] = field(default_factory=list, repr=False)

    @classmethod
    def degenerate_fit(cls, value: float) -> "Gmm2":
        return cls(
            mean_clean=value,
            mean_noisy=value,
            var_clean=VAR_FLOOR,
            var_noisy=VAR_FLOOR,
            weight_clean=0.5,
            weight_noisy=0.5,
            converged=False,
            iterations=0,
            final_log_likelihood=float("nan"),
            degenerate=True,
        )

    def as_arrays(self):
        means = np.array([self.mean_clean, self.mean_noisy])
        variances = np.array([self.var_clean, self.var_noisy])
        weights = np.array([self.weight_clean, self.weight_noisy])
        return means, variances, weights


def _values_of(losses) -> np.ndarray:
    if isinstance(losses, LossVector):
        return losses.normalized
    values = np.asarray(losses, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("losses must be 1-D")
    return values


def _log_densities(x, means, variances, weights):
    # (n, 2): log of weight_k * normal_pdf(x; mean_k, var_k)
    x = x[:, None]
    return (
        np.log(weights)[None, :]
        - 0.5 * np.log(2.0 * np.pi * variances)[None, :]
        - 0.5 * (x - means[None, :]) ** 2 / variances[None, :]
    )


def _log_likelihood_terms(log_dens):
    m = log_dens.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(log_dens - m).sum(axis=1, keepdims=True))).ravel()


def fit_gmm_em(losses, tol: float = 1e-6, max_iter: int = 100, seed=None) -> Gmm2:
    """Fit the two-component mixture by EM.

    Accepts a LossVector (fits the normalized losses) or a plain 1-D array
    (fit as given). Initialization is deterministic - means at the 10th/90th
    percentiles, both variances at the sample variance, weights 0.5/0.5 - so
    the seed argument is accepted for interface stability but unused.

    Stops when the log-likelihood improves by less than tol; variances are
    floored at VAR_FLOOR. An input with no spread returns a flagged
    degenerate fit instead of running EM.
    """
    del seed
    x = _values_of(losses)
    if len(x) < 4:
        raise ValueError(f"need at least 4 loss values to fit a mixture, got {len(x)}")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if x.max() == x.min():
        return Gmm2.degenerate_fit(float(x[0]))

    means = np.percentile(x, [10.0, 90.0]).astype(np.float64)
    if means[0] == means[1]:  # concentrated but not constant input
        means = np.array([x.min(), x.max()], dtype=np.float64)
    variances = np.full(2, max(float(x.var()), VAR_FLOOR))
    weights = np.full(2, 0.5)

    ll_history: list[float] = []
    prev_ll = None
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        log_dens = _log_densities(x, means, variances, weights)
        ll_terms = _log_likelihood_terms(log_dens)
        ll = float(ll_terms.sum())
        ll_history.append(ll)
        if prev_ll is not None and ll - prev_ll < tol:
            converged = True
            break
        resp = np.exp(log_dens - ll_terms[:, None])
        counts = np.maximum(resp.sum(axis=0), 1e-12)
        weights = counts / len(x)
        means = (resp * x[:, None]).sum(axis=0) / counts
        variances = np.maximum(
            (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / counts, VAR_FLOOR
        )
        prev_ll = ll
    if not converged:
        # score the parameters left by the last M-step
        ll_history.append(
            float(_log_likelihood_terms(_log_densities(x, means, variances, weights)).sum())
        )

    order = np.argsort(means, kind="stable")
    means, variances, weights = means[order], variances[order], weights[order]
    return Gmm2(
        mean_clean=float(means[0]),
        mean_noisy=float(means[1]),
        var_clean=float(variances[0]),
        var_noisy=float(variances[1]),
        weight_clean=float(weights[0]),
        weight_noisy=float(weights[1]),
        converged=converged,
        iterations=iterations,
        final_log_likelihood=ll_history[-1],
        ll_history=ll_history,
    )


def _component_posteriors(gmm: Gmm2, values: np.ndarray):
    means, variances, weights = gmm.as_arrays()
    log_dens = _log_densities(values, means, variances, weights)
    log_norm = _log_likelihood_terms(log_dens)
    post = np.exp(log_dens - log_norm[:, None])
    return post[:, 0], post[:, 1]


def posterior_clean(gmm: Gmm2, loss_value):
    """Probability that a (normalized-domain) loss belongs to the clean
    component. Degenerate fits fall back to 0.5 with a warning."""
    scalar = np.ndim(loss_value) == 0
    values = np.atleast_1d(np.asarray(loss_value, dtype=np.float64))
    if gmm.degenerate:
        warnings.warn("degenerate loss mixture: falling back to confidence 0.5", RuntimeWarning)
        w = np.full(values.shape, 0.5)
    else:
        w, _ = _component_posteriors(gmm, values)
    return float(w[0]) if scalar else w


def confidence_all(gmm: Gmm2, losses) -> np.ndarray:
    """Element-wise posterior_clean over a LossVector's normalized losses."""
    return np.atleast_1d(posterior_clean(gmm, _values_of(losses)))


def per_example_loss(params: MlpParams, view, aug: AugPolicy | None = None, seed=None) -> LossVector:
    """Cross-entropy of each example's observed label under the model, on a
    weakly augmented copy of the features."""
    if view.n == 0:
        raise ValueError("cannot compute per-example losses on an empty dataset")
    if aug is None:
        aug = AugPolicy(weak_sigma=0.0)
    x = weak_aug(view.features, aug, as_rng(seed))
    probs = softmax(forward(params, x))
    return LossVector.from_raw(losses_from_probs(probs, view.observed_labels))


def losses_from_probs(probs: np.ndarray, observed_labels: np.ndarray) -> np.ndarray:
    """Raw per-example cross-entropy given already-computed probabilities."""
    picked = probs[np.arange(len(observed_labels)), observed_labels]
    return -np.log(np.clip(picked, LOG_EPS, None))


def export_losses_csv(losses: LossVector, w, path) -> None:
    """Write the per-example loss/confidence table as
    `index,raw_loss,normalized_loss,w`."""
    w = np.asarray(w, dtype=np.float64)
    if len(w) != len(losses):
        raise ValueError("losses and confidences must align")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("index,raw_loss,normalized_loss,w\n")
        for i, (raw, norm, wi) in enumerate(zip(losses.raw, losses.normalized, w)):
            f.write(f"{i},{float(raw)!r},{float(norm)!r},{float(wi)!r}\n")
