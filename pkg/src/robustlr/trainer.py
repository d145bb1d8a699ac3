"""Co-training loop: warm-up, then rounds of confidence estimation,
pseudo-labeling, label refurbishment, and strong-augmented training.

Every phase draws from its own named RNG substream of the master seed, so
runs are reproducible and phases can be ablated without perturbing each
other's randomness.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import AugPolicy, strong_aug, weak_aug
from .data import DatasetView, LabeledDataset
from .dynamics import EpochRecord, estimated_noise_fraction, group_decompose
from .lossmodel import LossVector, confidence_all, fit_gmm_em, losses_from_probs
from .net import MlpParams, SgdConfig, SgdState, forward, init_mlp, softmax, train_batch
from .refurbish import refurbish, sharpen

CONFIDENCE_SOURCES = ("peer", "self", "ensemble")
PSEUDO_SOURCES = ("ensemble", "self")

# the two published hyperparameter presets: light noise vs heavy noise
PRESETS = {
    "light": {"temperature": 1.0, "reg_weight": 2.0},
    "heavy": {"temperature": 1.0 / 3.0, "reg_weight": 10.0},
}


def preset_for_noise_rate(rate: float) -> str:
    """Light preset up to 80% injected noise, heavy beyond."""
    return "light" if rate <= 0.8 else "heavy"


def substream(seed: int, *tags) -> np.random.Generator:
    """Independent, reproducible generator for a named phase of the run."""
    digest = hashlib.blake2s("/".join(map(str, tags)).encode(), digest_size=8).digest()
    return np.random.default_rng(
        np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest, "big")])
    )


@dataclass
class AblationFlags:
    """Switches for every component study; defaults are the full method."""

    use_refurbishment: bool = True  # off: hard-select observed vs pseudo at w > 0.5
    use_strong_aug: bool = True  # off: weak augmentation during learning too
    use_gmm: bool = True  # off: fixed confidence 0.5
    use_cotrain: bool = True  # off: single model, peer = self
    confidence_source: str = "peer"
    pseudo_source: str = "ensemble"

    def __post_init__(self):
        if self.confidence_source not in CONFIDENCE_SOURCES:
            raise ValueError(f"confidence_source must be one of {CONFIDENCE_SOURCES}")
        if self.pseudo_source not in PSEUDO_SOURCES:
            raise ValueError(f"pseudo_source must be one of {PSEUDO_SOURCES}")


@dataclass
class TrainConfig:
    warm_iters: int = 300
    round_iters: int = 300
    rounds: int = 20
    temperature: float = 1.0
    reg_weight: float = 2.0
    sgd: SgdConfig = field(default_factory=SgdConfig)
    aug: AugPolicy = field(default_factory=AugPolicy)
    ablation: AblationFlags = field(default_factory=AblationFlags)
    hidden_sizes: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    seed: int = 0
    lr_decay_round: int | None = None  # None: constant learning rate
    lr_decay_factor: float = 0.1
    fixed_confidence: float | None = None  # test hook: pin every w to this value

    def __post_init__(self):
        if min(self.warm_iters, self.round_iters, self.rounds) < 0:
            raise ValueError("iteration and round counts must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.reg_weight < 0:
            raise ValueError("reg_weight must be >= 0")
        if self.fixed_confidence is not None and not 0.0 <= self.fixed_confidence <= 1.0:
            raise ValueError("fixed_confidence must be in [0, 1]")


@dataclass
class CotrainState:
    """The peer parameter sets plus bookkeeping for a run."""

    models: list[MlpParams]
    round: int
    steps: list[int]
    degenerate_gmm_count: int
    seed: int
    last_confidences: list[np.ndarray] | None = None
    last_degenerate: bool = False


def one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    out = np.zeros((len(labels), class_count))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _batch_indices(n: int, batch_size: int, rng: np.random.Generator):
    """Endless shuffled mini-batch index stream; the tail of each epoch is
    yielded as a short batch."""
    while True:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield perm[start : start + batch_size]


def _train_phase(view, params, targets, iters, sgd, rng, aug, strong, reg_weight, context=""):
    """Run `iters` SGD steps on (augmented x, soft target) batches."""
    if iters == 0:
        return params
    opt = SgdState.init(params)
    batches = _batch_indices(view.n, sgd.batch_size, rng)
    for step in range(iters):
        idx = next(batches)
        x = (strong_aug if strong else weak_aug)(view.features[idx], aug, rng)
        try:
            _, loss = train_batch(params, x, targets[idx], sgd, opt, reg_weight)
        except RuntimeError as exc:
            raise RuntimeError(f"{context} step {step}: {exc}") from exc
        if not np.isfinite(loss):
            raise RuntimeError(f"{context} step {step}: non-finite loss {loss}")
    return params


def warmup(view: DatasetView, params: MlpParams, warm_iters: int, sgd: SgdConfig, rng, aug=None):
    """Short supervised training on observed one-hot labels, weakly augmented,
    stopped before the model fits much of the noise."""
    if aug is None:
        aug = AugPolicy()
    targets = one_hot(view.observed_labels, view.class_count)
    return _train_phase(
        view, params, targets, warm_iters, sgd, rng, aug, strong=False,
        reg_weight=0.0, context="warmup",
    )


@dataclass
class EstimationResult:
    targets: np.ndarray  # (n, C) refurbished soft labels
    confidence: np.ndarray  # (n,) clean-label posterior w
    degenerate: bool


def estimation_phase(view, models, m, config, rng) -> EstimationResult:
    """Per-example confidence plus refurbished targets for model m.

    One weakly augmented copy of the features serves both loss modeling and
    pseudo-labeling; predictions are constants (nothing backpropagates
    through the peers).
    """
    flags = config.ablation
    x_est = weak_aug(view.features, config.aug, rng)
    probs = [softmax(forward(model, x_est)) for model in models]
    peer = probs[1 - m] if len(models) == 2 else probs[m]
    mean_probs = probs[0] if len(probs) == 1 else (probs[0] + probs[1]) / 2.0

    source = {"peer": peer, "self": probs[m], "ensemble": mean_probs}[flags.confidence_source]
    degenerate = False
    if config.fixed_confidence is not None:
        w = np.full(view.n, float(config.fixed_confidence))
    elif not flags.use_gmm:
        w = np.full(view.n, 0.5)
    else:
        losses = LossVector.from_raw(losses_from_probs(source, view.observed_labels))
        gmm = fit_gmm_em(losses)
        if gmm.degenerate:
            degenerate = True
            w = np.full(view.n, 0.5)
        else:
            w = confidence_all(gmm, losses)

    base = mean_probs if flags.pseudo_source == "ensemble" else probs[m]
    pseudo = sharpen(base, config.temperature)
    observed = one_hot(view.observed_labels, view.class_count)
    if flags.use_refurbishment:
        targets = refurbish(observed, pseudo, w)
    else:
        targets = np.where(w[:, None] > 0.5, observed, pseudo)
    return EstimationResult(targets=targets, confidence=w, degenerate=degenerate)


def _effective_sgd(config: TrainConfig, round_index: int) -> SgdConfig:
    if config.lr_decay_round is not None and round_index >= config.lr_decay_round:
        return replace(config.sgd, learning_rate=config.sgd.learning_rate * config.lr_decay_factor)
    return config.sgd


def init_state(view: DatasetView, config: TrainConfig) -> CotrainState:
    n_models = 2 if config.ablation.use_cotrain else 1
    models = [
        init_mlp(
            view.dim, config.hidden_sizes, view.class_count, config.activation,
            substream(config.seed, "init", m),
        )
        for m in range(n_models)
    ]
    return CotrainState(models=models, round=0, steps=[0] * n_models,
                        degenerate_gmm_count=0, seed=config.seed)


def train_round(state: CotrainState, view: DatasetView, config: TrainConfig) -> CotrainState:
    """One main round: estimate, refurbish, and train each peer in turn."""
    r = state.round + 1
    confidences = []
    degenerate_any = False
    for m in range(len(state.models)):
        est = estimation_phase(
            view, state.models, m, config, substream(state.seed, "round", r, "estimate", m)
        )
        if est.degenerate:
            state.degenerate_gmm_count += 1
            degenerate_any = True
        confidences.append(est.confidence)
        _train_phase(
            view, state.models[m], est.targets, config.round_iters,
            _effective_sgd(config, r), substream(state.seed, "round", r, "train", m),
            config.aug, strong=config.ablation.use_strong_aug,
            reg_weight=config.reg_weight, context=f"round {r} model {m}",
        )
        state.steps[m] += config.round_iters
    state.round = r
    state.last_confidences = confidences
    state.last_degenerate = degenerate_any
    return state


def ensemble_proba(models: list[MlpParams], features: np.ndarray) -> np.ndarray:
    probs = [softmax(forward(model, features)) for model in models]
    return probs[0] if len(probs) == 1 else (probs[0] + probs[1]) / 2.0


def evaluate(models: list[MlpParams], features, labels) -> tuple[float, float]:
    """(model-0 accuracy, ensemble accuracy) on raw, un-augmented features."""
    labels = np.asarray(labels)
    acc0 = float(np.mean(softmax(forward(models[0], features)).argmax(axis=1) == labels))
    acc_ens = float(np.mean(ensemble_proba(models, features).argmax(axis=1) == labels))
    return acc0, acc_ens


def _epoch_record(state, train_ds: LabeledDataset, eval_ds: LabeledDataset) -> EpochRecord:
    pred = ensemble_proba(state.models, train_ds.features).argmax(axis=1)
    groups = group_decompose(pred, train_ds.observed_labels, train_ds.true_labels)
    acc0, acc_ens = evaluate(state.models, eval_ds.features, eval_ds.true_labels)
    if state.last_confidences is not None:
        w_bar = np.mean(state.last_confidences, axis=0)
        est = estimated_noise_fraction(w_bar)
        clean = train_ds.observed_labels == train_ds.true_labels
        mean_w_clean = float(w_bar[clean].mean()) if clean.any() else 0.5
        mean_w_noisy = float(w_bar[~clean].mean()) if (~clean).any() else 0.5
    else:
        # warm-up record: no confidences estimated yet
        est, mean_w_clean, mean_w_noisy = 0.0, 0.5, 0.5
    return EpochRecord(
        round=state.round,
        groups=groups,
        test_acc_model0=acc0,
        test_acc_ensemble=acc_ens,
        est_noise_fraction=est,
        mean_w_clean=mean_w_clean,
        mean_w_noisy=mean_w_noisy,
        degenerate_gmm=state.last_degenerate,
    )


def _fit_loop(view: DatasetView, config: TrainConfig, observer=None) -> CotrainState:
    state = init_state(view, config)
    for m in range(len(state.models)):
        warmup(
            view, state.models[m], config.warm_iters, config.sgd,
            substream(config.seed, "warmup", m), config.aug,
        )
        state.steps[m] += config.warm_iters
    if observer is not None:
        observer(state)
    for _ in range(config.rounds):
        train_round(state, view, config)
        if observer is not None:
            observer(state)
    return state


def fit_state(view: DatasetView, config: TrainConfig) -> CotrainState:
    """Train without diagnostics; the training path sees only the view."""
    return _fit_loop(view, config)


def run(train_ds: LabeledDataset, eval_ds: LabeledDataset, config: TrainConfig):
    """Full instrumented run: warm-up, R rounds, one EpochRecord per round.

    Training reads only train_ds.train_view(); ground truth is consulted
    solely when building records. Record construction draws no randomness, so
    the final parameters match an un-instrumented fit_state run bit for bit.
    """
    view = train_ds.train_view()
    records: list[EpochRecord] = []
    state = _fit_loop(view, config, lambda s: records.append(_epoch_record(s, train_ds, eval_ds)))
    return state, records


def train_supervised(train_ds: LabeledDataset, eval_ds: LabeledDataset, config: TrainConfig):
    """Reference run without estimation: observed one-hot labels throughout.

    Uses the same RNG substreams as run(), so a run() whose confidences are
    pinned to 1 reproduces it exactly.
    """
    view = train_ds.train_view()
    state = init_state(view, config)
    records: list[EpochRecord] = []
    for m in range(len(state.models)):
        warmup(
            view, state.models[m], config.warm_iters, config.sgd,
            substream(config.seed, "warmup", m), config.aug,
        )
        state.steps[m] += config.warm_iters
    records.append(_epoch_record(state, train_ds, eval_ds))
    targets = one_hot(view.observed_labels, view.class_count)
    for r in range(1, config.rounds + 1):
        for m in range(len(state.models)):
            _train_phase(
                view, state.models[m], targets, config.round_iters,
                _effective_sgd(config, r), substream(state.seed, "round", r, "train", m),
                config.aug, strong=config.ablation.use_strong_aug,
                reg_weight=config.reg_weight, context=f"supervised round {r} model {m}",
            )
            state.steps[m] += config.round_iters
        state.round = r
        records.append(_epoch_record(state, train_ds, eval_ds))
    return state, records
