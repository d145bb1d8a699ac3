"""Synthetic datasets, label-noise injection, and CSV persistence.

Ground-truth labels are evaluation-only metadata: the training code receives
a DatasetView, which carries observed labels but no ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .validation import as_feature_matrix, as_label_vector, as_rng

CLUSTER_RADIUS = 2.0  # distance from origin to every class mean in gen_blobs


class DatasetFormatError(ValueError):
    """Raised for malformed dataset CSV files; the message names the line."""


@dataclass
class DatasetView:
    """Training-facing dataset: features + observed labels, no ground truth."""

    features: np.ndarray
    observed_labels: np.ndarray
    class_count: int
    split_tag: str = "train"

    def __post_init__(self):
        self.features = as_feature_matrix(self.features, "features")
        self.observed_labels = as_label_vector(
            self.observed_labels, self.class_count, "observed_labels"
        )
        if len(self.features) != len(self.observed_labels):
            raise ValueError(
                f"{len(self.features)} feature rows vs {len(self.observed_labels)} labels"
            )

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class LabeledDataset:
    """Full dataset: a DatasetView plus side-band ground-truth labels."""

    features: np.ndarray
    true_labels: np.ndarray
    observed_labels: np.ndarray
    class_count: int
    split_tag: str = "train"

    def __post_init__(self):
        self.features = as_feature_matrix(self.features, "features")
        self.true_labels = as_label_vector(self.true_labels, self.class_count, "true_labels")
        self.observed_labels = as_label_vector(
            self.observed_labels, self.class_count, "observed_labels"
        )
        if not (len(self.features) == len(self.true_labels) == len(self.observed_labels)):
            raise ValueError("features, true_labels and observed_labels must align")

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def train_view(self) -> DatasetView:
        """The ground-truth-free view handed to training code."""
        return DatasetView(self.features, self.observed_labels, self.class_count, self.split_tag)


def class_means(class_count: int, dim: int) -> np.ndarray:
    """Deterministic cluster means: scaled simplex corners when they fit the
    ambient dimension, otherwise a circle in the first two coordinates."""
    means = np.zeros((class_count, dim))
    if class_count <= dim:
        for k in range(class_count):
            means[k, k] = CLUSTER_RADIUS
    else:
        angles = 2.0 * np.pi * np.arange(class_count) / class_count
        means[:, 0] = CLUSTER_RADIUS * np.cos(angles)
        means[:, 1] = CLUSTER_RADIUS * np.sin(angles)
    return means


def gen_blobs(class_count, per_class, dim, spread, seed, split_tag="train") -> LabeledDataset:
    """Isotropic Gaussian clusters, one per class, std = spread.

    Observed labels start out equal to the true labels.
    """
    if class_count < 2:
        raise ValueError("class_count must be >= 2")
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    rng = as_rng(seed)
    means = class_means(class_count, dim)
    features = np.vstack(
        [means[k] + spread * rng.standard_normal((per_class, dim)) for k in range(class_count)]
    )
    labels = np.repeat(np.arange(class_count), per_class)
    return LabeledDataset(features, labels, labels.copy(), class_count, split_tag)


def corrupt_symmetric(ds: LabeledDataset, r: float, seed) -> LabeledDataset:
    """With probability r, redraw the observed label uniformly over all C
    classes (the true class included, so the effective flip rate is
    r * (C-1) / C)."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {r}")
    rng = as_rng(seed)
    n, c = ds.n, ds.class_count
    observed = ds.true_labels.copy()
    hit = rng.random(n) < r
    observed[hit] = rng.integers(0, c, size=int(hit.sum()))
    return replace(ds, observed_labels=observed)


def check_transition_matrix(transition, class_count: int | None = None) -> np.ndarray:
    t = np.asarray(transition, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {t.shape}")
    if class_count is not None and t.shape[0] != class_count:
        raise ValueError(f"transition matrix is {t.shape[0]}x{t.shape[0]}, expected {class_count}")
    for i, row in enumerate(t):
        if np.any(row < 0):
            raise ValueError(f"transition row {i} has negative entries")
        if abs(row.sum() - 1.0) > 1e-9:
            raise ValueError(f"transition row {i} sums to {row.sum():.12f}, expected 1")
    return t


def corrupt_asymmetric(ds: LabeledDataset, transition, seed) -> LabeledDataset:
    """Draw each observed label from the transition row of its true class."""
    t = check_transition_matrix(transition, ds.class_count)
    rng = as_rng(seed)
    cdf = np.cumsum(t, axis=1)
    u = rng.random(ds.n)
    rows = cdf[ds.true_labels]
    observed = (u[:, None] > rows).sum(axis=1).astype(np.int64)
    observed = np.minimum(observed, ds.class_count - 1)  # guard cumsum rounding
    return replace(ds, observed_labels=observed)


def pair_flip_matrix(class_count: int, mass: float) -> np.ndarray:
    """Cyclic pair-flip transition: class k goes to (k+1) mod C with the given mass."""
    if not 0.0 <= mass <= 1.0:
        raise ValueError("mass must be in [0, 1]")
    t = (1.0 - mass) * np.eye(class_count)
    for k in range(class_count):
        t[k, (k + 1) % class_count] += mass
    return t


def boundary_scores(features, true_labels, class_count):
    """Per-example boundary proximity.

    Returns (score, nearest_other) where score = d_own / (d_own + d_nearest_other)
    from the true-class centroid geometry, and nearest_other is the index of
    the closest competing class centroid.
    """
    x = as_feature_matrix(features, "features")
    y = as_label_vector(true_labels, class_count, "true_labels")
    centroids = np.full((class_count, x.shape[1]), np.nan)
    for k in range(class_count):
        members = y == k
        if members.any():
            centroids[k] = x[members].mean(axis=0)
    dists = np.linalg.norm(x[:, None, :] - centroids[None, :, :], axis=2)
    dists = np.where(np.isnan(dists), np.inf, dists)
    d_own = dists[np.arange(len(x)), y]
    dists_other = dists.copy()
    dists_other[np.arange(len(x)), y] = np.inf
    nearest_other = dists_other.argmin(axis=1)
    d_other = dists_other[np.arange(len(x)), nearest_other]
    score = d_own / (d_own + d_other)
    return score, nearest_other.astype(np.int64)


def _boundary_rule(ds: LabeledDataset, strength: float):
    score, nearest_other = boundary_scores(ds.features, ds.true_labels, ds.class_count)
    flip_prob = np.clip(strength * score, 0.0, 1.0)
    return flip_prob, nearest_other


INSTANCE_RULES = {"boundary": _boundary_rule}


def corrupt_instance(ds: LabeledDataset, rule: str, strength: float, seed) -> LabeledDataset:
    """Feature-dependent corruption: examples near a competing class centroid
    flip more often, and flip toward that class."""
    if rule not in INSTANCE_RULES:
        raise ValueError(f"unknown instance-noise rule {rule!r}; known: {sorted(INSTANCE_RULES)}")
    if strength < 0:
        raise ValueError("strength must be >= 0")
    flip_prob, target = INSTANCE_RULES[rule](ds, strength)
    rng = as_rng(seed)
    hit = rng.random(ds.n) < flip_prob
    observed = ds.true_labels.copy()
    observed[hit] = target[hit]
    return replace(ds, observed_labels=observed)


@dataclass
class NoiseSpec:
    """Declarative corruption recipe, used mainly by the CLI."""

    kind: str  # symmetric | asymmetric | instance
    rate: float | None = None
    transition: np.ndarray | None = None
    rule: str = "boundary"
    strength: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("symmetric", "asymmetric", "instance"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "symmetric":
            if self.rate is None or not 0.0 <= self.rate <= 1.0:
                raise ValueError("symmetric noise needs a rate in [0, 1]")
        elif self.kind == "asymmetric":
            if self.transition is None:
                raise ValueError("asymmetric noise needs a transition matrix")
            self.transition = check_transition_matrix(self.transition)
        else:
            if self.strength is None or self.strength < 0:
                raise ValueError("instance noise needs a strength >= 0")

    def apply(self, ds: LabeledDataset) -> LabeledDataset:
        if self.kind == "symmetric":
            return corrupt_symmetric(ds, self.rate, self.seed)
        if self.kind == "asymmetric":
            return corrupt_asymmetric(ds, self.transition, self.seed)
        return corrupt_instance(ds, self.rule, self.strength, self.seed)


def effective_noise_rate(ds: LabeledDataset) -> float:
    """Fraction of examples whose observed label differs from the truth."""
    if ds.n == 0:
        return 0.0
    return float(np.mean(ds.observed_labels != ds.true_labels))


def _csv_header(dim: int) -> str:
    return ",".join([f"f{j}" for j in range(dim)] + ["observed", "true"])


def save_csv(ds: LabeledDataset, path) -> None:
    """Write `f0,...,f{D-1},observed,true` rows; floats use repr so the
    round trip is exact."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(_csv_header(ds.dim) + "\n")
        for row, obs, true in zip(ds.features, ds.observed_labels, ds.true_labels):
            f.write(",".join([repr(float(v)) for v in row] + [str(int(obs)), str(int(true))]) + "\n")


def _parse_rows(path, expect_true_column=True):
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{path}: line 1: empty file, expected a header row")
    header = lines[0].split(",")
    tail = ["observed", "true"] if expect_true_column else ["observed"]
    dim = len(header) - len(tail)
    if dim < 1 or header != [f"f{j}" for j in range(dim)] + tail:
        raise DatasetFormatError(f"{path}: line 1: bad header {lines[0]!r}")
    features, observed, true = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise DatasetFormatError(
                f"{path}: line {lineno}: expected {len(header)} fields, got {len(cells)}"
            )
        try:
            features.append([float(c) for c in cells[:dim]])
            labels = [int(c) for c in cells[dim:]]
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from None
        if any(lab < 0 for lab in labels):
            raise DatasetFormatError(f"{path}: line {lineno}: negative label")
        observed.append(labels[0])
        if expect_true_column:
            true.append(labels[1])
    features = np.asarray(features, dtype=np.float64).reshape(len(observed), dim)
    return features, np.asarray(observed, dtype=np.int64), np.asarray(true, dtype=np.int64), dim


def _resolve_class_count(path, label_columns: list[np.ndarray], class_count: int | None) -> int:
    if class_count is None:
        populated = [col.max() for col in label_columns if col.size]
        return int(max(populated)) + 1 if populated else 0
    for col in label_columns:
        bad = np.nonzero(col >= class_count)[0]
        if bad.size:
            # +2 for the header line and 1-based numbering
            raise DatasetFormatError(
                f"{path}: line {int(bad[0]) + 2}: label {int(col[bad[0]])} "
                f">= class_count {class_count}"
            )
    return class_count


def load_csv(path, class_count: int | None = None, split_tag: str = "train") -> LabeledDataset:
    features, observed, true, _ = _parse_rows(path, expect_true_column=True)
    c = _resolve_class_count(path, [observed, true], class_count)
    return LabeledDataset(features, true, observed, c, split_tag)


def load_csv_view(path, class_count: int | None = None, split_tag: str = "train") -> DatasetView:
    """Trainer-facing loader: reads the same format but withholds ground truth."""
    features, observed, _, _ = _parse_rows(path, expect_true_column=True)
    c = _resolve_class_count(path, [observed], class_count)
    return DatasetView(features, observed, c, split_tag)
