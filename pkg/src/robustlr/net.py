"""Small dense MLP classifier: forward pass, backprop, soft-target SGD.

Weights are stored per layer as (out, in) matrices so a layer computes
``x @ W.T + b``. Everything is float64 and deterministic given a seeded
generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import as_rng, check_finite

LOG_EPS = 1e-12  # clamp for log() inside cross-entropy

_ACTIVATIONS = ("relu", "tanh")


@dataclass
class MlpParams:
    """Layer weights/biases plus the hidden nonlinearity."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be parallel, non-empty lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(
                    f"layer {i} expects {w.shape[1]} inputs but layer {i-1} "
                    f"emits {self.weights[i - 1].shape[0]}"
                )

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def class_count(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def arrays(self) -> list[np.ndarray]:
        return self.weights + self.biases


@dataclass
class SgdConfig:
    """Mini-batch SGD with momentum and (weight-only) weight decay.

    learning_rate may be 0, which makes every step an exact no-op. The
    default rate is tuned for soft-target training on the bundled synthetic
    tasks; prolonged one-hot training on heavily corrupted labels is unstable
    there, which is the failure mode the diagnostics are built to expose.
    """

    learning_rate: float = 0.4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class SgdState:
    """Momentum velocity buffers, shaped like the parameters."""

    vel_w: list[np.ndarray] = field(default_factory=list)
    vel_b: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, params: MlpParams) -> "SgdState":
        return cls(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )


def init_mlp(in_dim, hidden_sizes, class_count, activation="relu", seed=0) -> MlpParams:
    """Fan-scaled uniform init: each weight in +-sqrt(6 / (fan_in + fan_out))."""
    rng = as_rng(seed)
    sizes = [int(in_dim), *map(int, hidden_sizes), int(class_count)]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, activation)


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(z.dtype)
    return 1.0 - np.tanh(z) ** 2


def _forward_cached(params: MlpParams, x: np.ndarray):
    """Return (logits, hidden inputs per layer, pre-activations per hidden layer)."""
    inputs, preacts = [x], []
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = h @ w.T + b
        preacts.append(z)
        h = _act(z, params.activation)
        inputs.append(h)
    logits = h @ params.weights[-1].T + params.biases[-1]
    return logits, inputs, preacts


def forward(params: MlpParams, x_batch: np.ndarray) -> np.ndarray:
    """Logits for a (batch, in_dim) input; output is (batch, class_count)."""
    x_batch = np.asarray(x_batch, dtype=np.float64)
    if x_batch.ndim != 2:
        raise ValueError(f"x_batch must be 2-D, got shape {x_batch.shape}")
    if x_batch.shape[1] != params.in_dim:
        raise ValueError(
            f"x_batch has {x_batch.shape[1]} features, network expects {params.in_dim}"
        )
    logits, _, _ = _forward_cached(params, x_batch)
    return check_finite(logits, "logits")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stabilized softmax; accepts a single vector or a batch."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def soft_cross_entropy(pred, target) -> float | np.ndarray:
    """-sum(target * log(pred)), with pred clamped at LOG_EPS.

    Both arguments are probability vectors (or row-wise batches); returns a
    scalar for vectors, a per-row array for batches.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    ce = -(target * np.log(np.clip(pred, LOG_EPS, None))).sum(axis=-1)
    return float(ce) if ce.ndim == 0 else ce


def batch_loss(params: MlpParams, x_batch, targets, reg_weight: float = 0.0) -> float:
    """Mean soft-target cross-entropy plus the optional uniform-prior penalty.

    The penalty is reg_weight * KL(uniform || mean batch prediction); its
    closed form matches refurbish.uniformity_reg.
    """
    probs = softmax(forward(params, x_batch))
    loss = float(np.mean(soft_cross_entropy(probs, np.asarray(targets, dtype=np.float64))))
    if reg_weight:
        c = params.class_count
        mean_pred = np.clip(probs.mean(axis=0), LOG_EPS, None)
        loss += reg_weight * float(np.sum((1.0 / c) * (np.log(1.0 / c) - np.log(mean_pred))))
    return loss


def gradients(params: MlpParams, x_batch, targets, reg_weight: float = 0.0):
    """Backprop through the fixed MLP graph.

    Returns (grads_w, grads_b, loss, probs) where the loss matches
    batch_loss(params, x_batch, targets, reg_weight) and gradients are of the
    mean batch loss.
    """
    x_batch = np.asarray(x_batch, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = x_batch.shape[0]
    logits, inputs, preacts = _forward_cached(params, x_batch)
    probs = softmax(logits)

    loss = float(np.mean(soft_cross_entropy(probs, targets)))
    dlogits = (probs - targets) / n
    if reg_weight:
        c = params.class_count
        mean_pred = np.clip(probs.mean(axis=0), LOG_EPS, None)
        loss += reg_weight * float(np.sum((1.0 / c) * (np.log(1.0 / c) - np.log(mean_pred))))
        # d/d mean_pred of the penalty, pushed through each row's softmax Jacobian
        g = -(1.0 / c) / mean_pred
        inner = probs * g
        dlogits = dlogits + (reg_weight / n) * (inner - probs * inner.sum(axis=1, keepdims=True))

    grads_w = [np.empty(0)] * len(params.weights)
    grads_b = [np.empty(0)] * len(params.biases)
    delta = dlogits
    for layer in range(len(params.weights) - 1, -1, -1):
        grads_w[layer] = delta.T @ inputs[layer]
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer]) * _act_grad(
                preacts[layer - 1], params.activation
            )
    return grads_w, grads_b, loss, probs


def train_batch(
    params: MlpParams,
    x_batch,
    targets,
    sgd: SgdConfig,
    opt_state: SgdState | None = None,
    reg_weight: float = 0.0,
):
    """One SGD step on the mean batch loss; mutates params in place.

    Returns (params, batch loss). Weight decay is applied to weights only, as
    part of the update rather than the reported loss.
    """
    if opt_state is None:
        opt_state = SgdState.init(params)
    grads_w, grads_b, loss, _ = gradients(params, x_batch, targets, reg_weight)
    for g in (*grads_w, *grads_b):
        if not np.all(np.isfinite(g)):
            raise RuntimeError(
                f"non-finite gradient (loss={loss}); aborting update to keep parameters valid"
            )
    lr, mom, wd = sgd.learning_rate, sgd.momentum, sgd.weight_decay
    for i, (w, gw) in enumerate(zip(params.weights, grads_w)):
        if wd:
            gw = gw + wd * w
        opt_state.vel_w[i] = mom * opt_state.vel_w[i] + gw
        w -= lr * opt_state.vel_w[i]
    for i, (b, gb) in enumerate(zip(params.biases, grads_b)):
        opt_state.vel_b[i] = mom * opt_state.vel_b[i] + gb
        b -= lr * opt_state.vel_b[i]
    return params, loss


def numeric_gradients(params: MlpParams, x_batch, targets, epsilon: float, reg_weight: float = 0.0):
    """Central-difference gradients of batch_loss for every parameter entry."""
    grads = []
    for arr in params.arrays():
        g = np.zeros_like(arr)
        flat, gflat = arr.ravel(), g.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            hi = batch_loss(params, x_batch, targets, reg_weight)
            flat[j] = orig - epsilon
            lo = batch_loss(params, x_batch, targets, reg_weight)
            flat[j] = orig
            gflat[j] = (hi - lo) / (2.0 * epsilon)
        grads.append(g)
    return grads


def max_relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    """max over entries of |a - n| / max(|a|, |n|, 1e-8)."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def grad_check(params: MlpParams, x_batch, targets, epsilon: float = 1e-5, reg_weight: float = 0.0) -> float:
    """Compare backprop against central differences; returns the max relative error."""
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError("epsilon must be in (0, 1e-2]")
    grads_w, grads_b, _, _ = gradients(params, x_batch, targets, reg_weight)
    numeric = numeric_gradients(params, x_batch, targets, epsilon, reg_weight)
    return max_relative_error([*grads_w, *grads_b], numeric)


def save_params(params: MlpParams, path) -> None:
    """Versioned .npz with a magic tag and a layer-size manifest."""
    payload = {
        "magic": np.array("robustlr-model"),
        "format_version": np.array(1),
        "activation": np.array(params.activation),
        "layer_sizes": np.array([params.in_dim] + [w.shape[0] for w in params.weights]),
    }
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        payload[f"W{i}"] = w
        payload[f"b{i}"] = b
    np.savez(path, **payload)


def load_params(path) -> MlpParams:
    with np.load(path, allow_pickle=False) as f:
        if "magic" not in f or str(f["magic"]) != "robustlr-model":
            raise ValueError(f"{path}: not a robustlr model file")
        if int(f["format_version"]) != 1:
            raise ValueError(f"{path}: unsupported model format version {int(f['format_version'])}")
        sizes = f["layer_sizes"]
        weights, biases = [], []
        for i in range(len(sizes) - 1):
            w, b = f[f"W{i}"], f[f"b{i}"]
            if w.shape != (sizes[i + 1], sizes[i]):
                raise ValueError(f"{path}: layer {i} shape {w.shape} disagrees with manifest")
            weights.append(w)
            biases.append(b)
        return MlpParams(weights, biases, str(f["activation"]))
