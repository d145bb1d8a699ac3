"""Training-dynamics diagnostics: prediction/label group decomposition,
noise-rate estimation from confidences, top-loss auditing, and JSONL records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .validation import as_label_vector

GROUP_KEYS = ("I", "II", "III", "IV", "residual")


def _exact_fractions(counts) -> tuple[float, ...]:
    """Counts -> fractions whose left-to-right float sum is exactly 1.0.

    The last nonzero bucket is stored as the complement of the float sum of
    the buckets before it (within ~1e-15 of its count/N value); later buckets
    are exact zeros. That makes f1 + f2 + ... + fk == 1.0 hold in IEEE-754
    when evaluated left to right.
    """
    counts = [int(c) for c in counts]
    total = sum(counts)
    if total <= 0:
        raise ValueError("cannot take fractions of an empty partition")
    if min(counts) < 0:
        raise ValueError("counts must be non-negative")
    last_nonzero = max(i for i, c in enumerate(counts) if c > 0)
    fractions = [c / total for c in counts]
    prefix = 0.0
    for i in range(last_nonzero):
        prefix += fractions[i]
    fractions[last_nonzero] = 1.0 - prefix
    for i in range(last_nonzero + 1, len(fractions)):
        fractions[i] = 0.0
    return tuple(fractions)


@dataclass
class GroupFractions:
    """Partition of examples by predicted vs observed vs true label.

    kept_clean (I):    pred = true,  observed = true
    corrected (II):    pred = true,  observed != true
    memorized (III):   pred = observed != true
    miscorrected (IV): pred != observed, pred != true, observed != true
    missed_clean:      observed = true but pred != true (residual bucket)
    """

    kept_clean: float
    corrected: float
    memorized: float
    miscorrected: float
    missed_clean: float
    counts: tuple[int, int, int, int, int]

    def as_dict(self) -> dict[str, float]:
        return dict(
            zip(
                GROUP_KEYS,
                (self.kept_clean, self.corrected, self.memorized, self.miscorrected, self.missed_clean),
            )
        )

    @classmethod
    def from_dict(cls, d: dict, counts=(0, 0, 0, 0, 0)) -> "GroupFractions":
        return cls(d["I"], d["II"], d["III"], d["IV"], d["residual"], tuple(counts))


def group_decompose(pred_labels, observed_labels, true_labels) -> GroupFractions:
    """Split examples into the four agreement groups plus the residual bucket
    (clean-labeled examples the model nevertheless gets wrong)."""
    pred = as_label_vector(pred_labels, name="pred_labels")
    observed = as_label_vector(observed_labels, name="observed_labels")
    true = as_label_vector(true_labels, name="true_labels")
    if not (len(pred) == len(observed) == len(true)):
        raise ValueError(
            f"length mismatch: pred {len(pred)}, observed {len(observed)}, true {len(true)}"
        )
    if len(pred) == 0:
        raise ValueError("cannot decompose an empty prediction set")
    clean = observed == true
    pred_right = pred == true
    counts = (
        int(np.sum(clean & pred_right)),
        int(np.sum(~clean & pred_right)),
        int(np.sum(~clean & (pred == observed))),
        int(np.sum(~clean & ~pred_right & (pred != observed))),
        int(np.sum(clean & ~pred_right)),
    )
    return GroupFractions(*_exact_fractions(counts), counts=counts)


def correction_precision(groups: GroupFractions) -> float:
    """II / (II + IV): of the predictions that disagree with a noisy observed
    label, the fraction that actually recover the truth. NaN if no such
    predictions exist."""
    denom = groups.counts[1] + groups.counts[3]
    if denom == 0:
        return float("nan")
    return groups.counts[1] / denom


def estimated_noise_fraction(w) -> float:
    """Fraction of examples the mixture flags as likely noisy (w < 0.5;
    ties count as clean)."""
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ValueError("empty confidence vector")
    return float(np.mean(w < 0.5))


@dataclass
class EpochRecord:
    """One round's diagnostics, serialized as a JSON Lines object."""

    round: int
    groups: GroupFractions
    test_acc_model0: float
    test_acc_ensemble: float
    est_noise_fraction: float
    mean_w_clean: float
    mean_w_noisy: float
    degenerate_gmm: bool

    def to_json_dict(self) -> dict:
        return {
            "round": int(self.round),
            "groups": self.groups.as_dict(),
            "test_acc_model0": float(self.test_acc_model0),
            "test_acc_ensemble": float(self.test_acc_ensemble),
            "est_noise_fraction": float(self.est_noise_fraction),
            "mean_w_clean": float(self.mean_w_clean),
            "mean_w_noisy": float(self.mean_w_noisy),
            "degenerate_gmm": bool(self.degenerate_gmm),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EpochRecord":
        return cls(
            round=int(d["round"]),
            groups=GroupFractions.from_dict(d["groups"]),
            test_acc_model0=float(d["test_acc_model0"]),
            test_acc_ensemble=float(d["test_acc_ensemble"]),
            est_noise_fraction=float(d["est_noise_fraction"]),
            mean_w_clean=float(d["mean_w_clean"]),
            mean_w_noisy=float(d["mean_w_noisy"]),
            degenerate_gmm=bool(d["degenerate_gmm"]),
        )


def write_records(records, sink) -> None:
    """Serialize EpochRecords as JSON Lines, one object per round."""
    try:
        if hasattr(sink, "write"):
            for rec in records:
                sink.write(json.dumps(rec.to_json_dict()) + "\n")
        else:
            with open(sink, "w", encoding="utf-8", newline="\n") as f:
                for rec in records:
                    f.write(json.dumps(rec.to_json_dict()) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write records to {sink}: {exc}") from exc


def read_records(path) -> list[EpochRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(EpochRecord.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: bad record ({exc})") from None
    return records


@dataclass
class AuditEntry:
    index: int
    raw_loss: float
    w: float
    observed: int
    predicted: int
    pred_confidence: float


@dataclass
class AuditReport:
    """Top-K examples by raw loss, the candidates for label inspection."""

    entries: list[AuditEntry]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("index,raw_loss,w,observed,predicted,pred_confidence\n")
            for e in self.entries:
                f.write(
                    f"{e.index},{e.raw_loss!r},{e.w!r},{e.observed},{e.predicted},{e.pred_confidence!r}\n"
                )


def audit_top_losses(losses, w, pred_probs, observed_labels, k: int) -> AuditReport:
    """Rank examples by loss (descending, ties broken by index ascending) and
    report the top k with their confidences and model predictions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    raw = np.asarray(losses, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    probs = np.asarray(pred_probs, dtype=np.float64)
    observed = as_label_vector(observed_labels, name="observed_labels")
    n = len(raw)
    if not (len(w) == len(probs) == len(observed) == n):
        raise ValueError("losses, w, pred_probs and observed_labels must align")
    order = np.lexsort((np.arange(n), -raw))
    predicted = probs.argmax(axis=1)
    entries = [
        AuditEntry(
            index=int(i),
            raw_loss=float(raw[i]),
            w=float(w[i]),
            observed=int(observed[i]),
            predicted=int(predicted[i]),
            pred_confidence=float(probs[i, predicted[i]]),
        )
        for i in order[: min(k, n)]
    ]
    return AuditReport(entries)
