"""scikit-learn estimator facade over the co-training loop.

RobustLRClassifier follows the fit/predict/predict_proba contract and plays
with clone, pipelines and grid search; hyperparameters mirror TrainConfig.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .augment import AugPolicy
from .data import DatasetView, LabeledDataset
from .dynamics import estimated_noise_fraction
from .net import SgdConfig
from .trainer import AblationFlags, TrainConfig, ensemble_proba, fit_state, run
from .validation import as_feature_matrix


class RobustLRClassifier(ClassifierMixin, BaseEstimator):
    """Noise-robust MLP classifier trained with co-trained label refurbishment.

    fit(X, y) treats y as possibly noisy observed labels. Two peer MLPs are
    warmed up on them, then trained for `rounds` rounds on refurbished soft
    targets: a per-example convex blend of the observed one-hot label and a
    sharpened ensemble pseudo-label, weighted by a GMM-based clean-label
    confidence.

    Pass eval_X/eval_y (and true_y for the training set) to fit() to collect
    per-round diagnostic records in ``history_``.
    """

    def __init__(
        self,
        rounds=20,
        warm_iters=300,
        round_iters=300,
        hidden_sizes=(64, 64),
        activation="relu",
        learning_rate=0.4,
        momentum=0.9,
        weight_decay=5e-4,
        batch_size=64,
        temperature=1.0,
        reg_weight=2.0,
        weak_sigma=0.1,
        strong_sigma=0.3,
        strong_mask_prob=0.15,
        use_refurbishment=True,
        use_strong_aug=True,
        use_gmm=True,
        use_cotrain=True,
        confidence_source="peer",
        pseudo_source="ensemble",
        lr_decay_round=None,
        lr_decay_factor=0.1,
        random_state=0,
    ):
        self.rounds = rounds
        self.warm_iters = warm_iters
        self.round_iters = round_iters
        self.hidden_sizes = hidden_sizes
        self.activation = activation
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.temperature = temperature
        self.reg_weight = reg_weight
        self.weak_sigma = weak_sigma
        self.strong_sigma = strong_sigma
        self.strong_mask_prob = strong_mask_prob
        self.use_refurbishment = use_refurbishment
        self.use_strong_aug = use_strong_aug
        self.use_gmm = use_gmm
        self.use_cotrain = use_cotrain
        self.confidence_source = confidence_source
        self.pseudo_source = pseudo_source
        self.lr_decay_round = lr_decay_round
        self.lr_decay_factor = lr_decay_factor
        self.random_state = random_state

    def build_config(self) -> TrainConfig:
        """The TrainConfig equivalent of the current hyperparameters."""
        return TrainConfig(
            warm_iters=int(self.warm_iters),
            round_iters=int(self.round_iters),
            rounds=int(self.rounds),
            temperature=float(self.temperature),
            reg_weight=float(self.reg_weight),
            sgd=SgdConfig(
                learning_rate=float(self.learning_rate),
                momentum=float(self.momentum),
                weight_decay=float(self.weight_decay),
                batch_size=int(self.batch_size),
            ),
            aug=AugPolicy(
                weak_sigma=float(self.weak_sigma),
                strong_sigma=float(self.strong_sigma),
                strong_mask_prob=float(self.strong_mask_prob),
            ),
            ablation=AblationFlags(
                use_refurbishment=bool(self.use_refurbishment),
                use_strong_aug=bool(self.use_strong_aug),
                use_gmm=bool(self.use_gmm),
                use_cotrain=bool(self.use_cotrain),
                confidence_source=self.confidence_source,
                pseudo_source=self.pseudo_source,
            ),
            hidden_sizes=tuple(int(h) for h in self.hidden_sizes),
            activation=self.activation,
            seed=0 if self.random_state is None else int(self.random_state),
            lr_decay_round=None if self.lr_decay_round is None else int(self.lr_decay_round),
            lr_decay_factor=float(self.lr_decay_factor),
        )

    def _encode(self, labels, name) -> np.ndarray:
        labels = np.asarray(labels)
        idx = np.searchsorted(self.classes_, labels)
        idx = np.clip(idx, 0, len(self.classes_) - 1)
        if not np.array_equal(self.classes_[idx], labels):
            raise ValueError(f"{name} contains labels unseen in y")
        return idx.astype(np.int64)

    def fit(self, X, y, eval_X=None, eval_y=None, true_y=None):
        """Train on observed labels y.

        eval_X/eval_y: optional held-out set; true_y: optional ground truth
        aligned with X. When both are given, per-round EpochRecords are kept
        in ``history_`` (ground truth feeds diagnostics only, never training).
        """
        X = as_feature_matrix(X, "X")
        y = np.asarray(y)
        if len(X) != len(y):
            raise ValueError(f"X has {len(X)} rows but y has {len(y)} entries")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")
        self.n_features_in_ = X.shape[1]
        config = self.build_config()
        view = DatasetView(X, y_idx, len(self.classes_))

        if eval_X is not None and eval_y is not None and true_y is not None:
            train_ds = LabeledDataset(X, self._encode(true_y, "true_y"), y_idx, len(self.classes_))
            eval_idx = self._encode(eval_y, "eval_y")
            eval_ds = LabeledDataset(
                as_feature_matrix(eval_X, "eval_X"), eval_idx, eval_idx.copy(),
                len(self.classes_), "test",
            )
            self.state_, self.history_ = run(train_ds, eval_ds, config)
        else:
            self.state_ = fit_state(view, config)
            self.history_ = None

        self.models_ = self.state_.models
        if self.state_.last_confidences is not None:
            self.noise_estimate_ = estimated_noise_fraction(
                np.mean(self.state_.last_confidences, axis=0)
            )
        else:
            self.noise_estimate_ = None
        return self

    def _check_fitted_input(self, X) -> np.ndarray:
        if not hasattr(self, "models_") or not hasattr(self, "classes_"):
            raise ValueError("this RobustLRClassifier instance is not fitted yet")
        X = as_feature_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        """Ensemble class probabilities, columns ordered like ``classes_``."""
        X = self._check_fitted_input(X)
        return ensemble_proba(self.models_, X)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]

    def confidence_weights(self) -> np.ndarray | None:
        """Final-round per-example clean-label confidences for the training
        set (averaged over peers), or None before any main round ran."""
        if self.state_.last_confidences is None:
            return None
        return np.mean(self.state_.last_confidences, axis=0)
