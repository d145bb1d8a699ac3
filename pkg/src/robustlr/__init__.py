"""Noise-robust classification via co-trained label refurbishment.

The training loop warms up two peer MLPs on observed (possibly noisy)
labels, then alternates rounds of: per-example loss modeling under the peer,
clean-label confidence from a two-component Gaussian mixture, sharpened
ensemble pseudo-labels, and training on the confidence-weighted blend of
observed and pseudo labels.
"""

from .augment import AugPolicy, strong_aug, weak_aug
from .data import (
    DatasetFormatError,
    DatasetView,
    LabeledDataset,
    NoiseSpec,
    corrupt_asymmetric,
    corrupt_instance,
    corrupt_symmetric,
    effective_noise_rate,
    gen_blobs,
    load_csv,
    load_csv_view,
    pair_flip_matrix,
    save_csv,
)
from .dynamics import (
    AuditReport,
    EpochRecord,
    GroupFractions,
    audit_top_losses,
    correction_precision,
    estimated_noise_fraction,
    group_decompose,
    read_records,
    write_records,
)
from .estimator import RobustLRClassifier
from .lossmodel import (
    Gmm2,
    LossVector,
    confidence_all,
    export_losses_csv,
    fit_gmm_em,
    per_example_loss,
    posterior_clean,
)
from .net import (
    MlpParams,
    SgdConfig,
    forward,
    grad_check,
    init_mlp,
    load_params,
    save_params,
    softmax,
    soft_cross_entropy,
    train_batch,
)
from .refurbish import pseudo_label, refurbish, sharpen, uniformity_reg
from .trainer import (
    AblationFlags,
    CotrainState,
    TrainConfig,
    evaluate,
    fit_state,
    run,
    train_round,
    train_supervised,
    warmup,
)

__version__ = "0.1.0"

__all__ = [
    "AblationFlags",
    "AugPolicy",
    "AuditReport",
    "CotrainState",
    "DatasetFormatError",
    "DatasetView",
    "EpochRecord",
    "Gmm2",
    "GroupFractions",
    "LabeledDataset",
    "LossVector",
    "MlpParams",
    "NoiseSpec",
    "RobustLRClassifier",
    "SgdConfig",
    "TrainConfig",
    "audit_top_losses",
    "confidence_all",
    "correction_precision",
    "corrupt_asymmetric",
    "corrupt_instance",
    "corrupt_symmetric",
    "effective_noise_rate",
    "estimated_noise_fraction",
    "evaluate",
    "export_losses_csv",
    "fit_gmm_em",
    "fit_state",
    "forward",
    "gen_blobs",
    "grad_check",
    "group_decompose",
    "init_mlp",
    "load_csv",
    "load_csv_view",
    "load_params",
    "pair_flip_matrix",
    "per_example_loss",
    "posterior_clean",
    "pseudo_label",
    "read_records",
    "refurbish",
    "run",
    "save_csv",
    "save_params",
    "sharpen",
    "soft_cross_entropy",
    "softmax",
    "strong_aug",
    "train_batch",
    "train_round",
    "train_supervised",
    "uniformity_reg",
    "warmup",
    "weak_aug",
    "write_records",
]
