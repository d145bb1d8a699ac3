"""Command-line surface: gen, corrupt, train, audit, report.

Training runs are driven by a flat `key = value` config file (documented in
the README); command-line flags override file values. All commands are
deterministic given identical arguments and seeds.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import data as dx
from . import trainer as tr
from .augment import AugPolicy
from .dynamics import GROUP_KEYS, audit_top_losses, read_records, write_records
from .lossmodel import (LossVector, confidence_all, export_losses_csv, fit_gmm_em,
                        losses_from_probs)
from .net import SgdConfig, forward, load_params, save_params, softmax

_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True,
               "0": False, "false": False, "no": False, "off": False}


def _cast_bool(s: str) -> bool:
    try:
        return _BOOL_WORDS[s.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {s!r}") from None


def _cast_hidden(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.replace(" ", "").split(",") if p)


def _cast_opt_int(s: str):
    return None if s.strip().lower() in ("", "none") else int(s)


# every key accepted in a train config file, with its parser
TRAIN_SCHEMA = {
    "data": str, "eval_data": str, "out": str, "preset": str, "seed": int,
    "classes": int, "per_class": int, "eval_per_class": int, "dim": int, "spread": float,
    "noise_kind": str, "noise_rate": float, "noise_rule": str,
    "noise_strength": float, "noise_matrix": str,
    "rounds": int, "warm_iters": int, "round_iters": int,
    "batch_size": int, "learning_rate": float, "momentum": float, "weight_decay": float,
    "temperature": float, "reg_weight": float,
    "weak_sigma": float, "strong_sigma": float, "strong_mask_prob": float,
    "use_refurbishment": _cast_bool, "use_strong_aug": _cast_bool,
    "use_gmm": _cast_bool, "use_cotrain": _cast_bool,
    "confidence_source": str, "pseudo_source": str,
    "lr_decay_round": _cast_opt_int, "lr_decay_factor": float,
    "hidden_sizes": _cast_hidden, "activation": str,
}


def parse_config_file(path) -> dict[str, str]:
    """Flat `key = value` lines; '#' starts a comment; quotes are optional."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected `key = value`")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
                value = value[1:-1]
            if not key:
                raise ValueError(f"{path}: line {lineno}: empty key")
            values[key] = value
    return values


def _typed_config(raw: dict[str, str], source: str) -> dict:
    cfg = {}
    for key, value in raw.items():
        if key not in TRAIN_SCHEMA:
            raise ValueError(f"{source}: unknown config key {key!r}")
        try:
            cfg[key] = TRAIN_SCHEMA[key](value)
        except ValueError as exc:
            raise ValueError(f"{source}: bad value for {key!r}: {exc}") from None
    return cfg


def _build_train_config(cfg: dict) -> tr.TrainConfig:
    base = tr.TrainConfig()
    preset = cfg.get("preset")
    if preset is None:
        preset = tr.preset_for_noise_rate(cfg["noise_rate"]) if "noise_rate" in cfg else "light"
    if preset not in (*tr.PRESETS, "custom"):
        raise ValueError(f"preset must be one of light/heavy/custom, got {preset!r}")
    if preset != "custom":
        overridden = {k for k in ("temperature", "reg_weight") if k in cfg}
        if overridden:
            raise ValueError(
                f"{'/'.join(sorted(overridden))} can only be set under preset = custom"
            )
        hyper = tr.PRESETS[preset]
    else:
        hyper = {"temperature": cfg.get("temperature", base.temperature),
                 "reg_weight": cfg.get("reg_weight", base.reg_weight)}

    defaults = SgdConfig()
    sgd = SgdConfig(
        learning_rate=cfg.get("learning_rate", defaults.learning_rate),
        momentum=cfg.get("momentum", defaults.momentum),
        weight_decay=cfg.get("weight_decay", defaults.weight_decay),
        batch_size=cfg.get("batch_size", defaults.batch_size),
    )
    base_aug = AugPolicy()
    aug = AugPolicy(
        weak_sigma=cfg.get("weak_sigma", base_aug.weak_sigma),
        strong_sigma=cfg.get("strong_sigma", base_aug.strong_sigma),
        strong_mask_prob=cfg.get("strong_mask_prob", base_aug.strong_mask_prob),
    )
    flags = tr.AblationFlags(
        use_refurbishment=cfg.get("use_refurbishment", True),
        use_strong_aug=cfg.get("use_strong_aug", True),
        use_gmm=cfg.get("use_gmm", True),
        use_cotrain=cfg.get("use_cotrain", True),
        confidence_source=cfg.get("confidence_source", "peer"),
        pseudo_source=cfg.get("pseudo_source", "ensemble"),
    )
    return tr.TrainConfig(
        warm_iters=cfg.get("warm_iters", base.warm_iters),
        round_iters=cfg.get("round_iters", base.round_iters),
        rounds=cfg.get("rounds", base.rounds),
        temperature=hyper["temperature"],
        reg_weight=hyper["reg_weight"],
        sgd=sgd,
        aug=aug,
        ablation=flags,
        hidden_sizes=cfg.get("hidden_sizes", base.hidden_sizes),
        activation=cfg.get("activation", base.activation),
        seed=cfg.get("seed", 0),
        lr_decay_round=cfg.get("lr_decay_round"),
        lr_decay_factor=cfg.get("lr_decay_factor", base.lr_decay_factor),
    )


def _resolve_datasets(cfg: dict):
    """Load the train/eval datasets from paths, or generate-and-corrupt them."""
    if "data" in cfg:
        train_ds = dx.load_csv(cfg["data"], split_tag="train")
        if "eval_data" not in cfg:
            raise ValueError("`eval_data` is required when `data` is given")
        eval_ds = dx.load_csv(cfg["eval_data"], class_count=train_ds.class_count,
                              split_tag="test")
        return train_ds, eval_ds
    for key in ("classes", "per_class", "dim", "spread"):
        if key not in cfg:
            raise ValueError(f"config needs either `data` or the generator key `{key}`")
    seed = cfg.get("seed", 0)
    train_ds = dx.gen_blobs(cfg["classes"], cfg["per_class"], cfg["dim"], cfg["spread"],
                            tr.substream(seed, "gen", "train"))
    eval_ds = dx.gen_blobs(cfg["classes"], cfg.get("eval_per_class", cfg["per_class"] // 4 or 1),
                           cfg["dim"], cfg["spread"],
                           tr.substream(seed, "gen", "test"), split_tag="test")
    if "noise_kind" in cfg:
        spec = _noise_spec(cfg, seed)
        train_ds = spec.apply(train_ds)
    return train_ds, eval_ds


def _noise_spec(cfg: dict, seed: int) -> dx.NoiseSpec:
    kind = cfg["noise_kind"]
    transition = None
    if kind == "asymmetric":
        if "noise_matrix" in cfg:
            transition = _load_matrix(cfg["noise_matrix"])
        elif "noise_rate" in cfg:
            transition = dx.pair_flip_matrix(cfg["classes"], cfg["noise_rate"])
        else:
            raise ValueError("asymmetric noise needs noise_matrix or noise_rate")
    return dx.NoiseSpec(
        kind=kind,
        rate=cfg.get("noise_rate"),
        transition=transition,
        rule=cfg.get("noise_rule", "boundary"),
        strength=cfg.get("noise_strength"),
        seed=int(tr.substream(seed, "noise").integers(0, 2**31)),
    )


def _load_matrix(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(c) for c in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return np.asarray(rows, dtype=np.float64)


def cmd_gen(args) -> int:
    ds = dx.gen_blobs(args.classes, args.per_class, args.dim, args.spread, args.seed)
    dx.save_csv(ds, args.output)
    print(f"wrote {args.output}: N={ds.n} C={ds.class_count} D={ds.dim}")
    return 0


def cmd_corrupt(args) -> int:
    ds = dx.load_csv(args.input)
    transition = _load_matrix(args.matrix) if args.matrix else None
    if args.kind == "asymmetric" and transition is None:
        if args.rate is None:
            raise ValueError("asymmetric corruption needs --matrix or --rate (pair flip)")
        transition = dx.pair_flip_matrix(ds.class_count, args.rate)
    spec = dx.NoiseSpec(kind=args.kind, rate=args.rate, transition=transition,
                        rule=args.rule, strength=args.strength, seed=args.seed)
    out = spec.apply(ds)
    dx.save_csv(out, args.output)
    print(f"wrote {args.output}: effective_noise_rate={dx.effective_noise_rate(out):.4f}")
    return 0


def cmd_train(args) -> int:
    raw = parse_config_file(args.config) if args.config else {}
    cfg = _typed_config(raw, args.config or "config")
    overrides = {}
    for key in TRAIN_SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            overrides[key] = flag
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides.update(_typed_config({key.strip(): value.strip()}, "--set"))
    cfg.update(overrides)

    out_dir = cfg.get("out", "runs/latest")
    train_ds, eval_ds = _resolve_datasets(cfg)
    config = _build_train_config(cfg)
    state, records = tr.run(train_ds, eval_ds, config)

    os.makedirs(out_dir, exist_ok=True)
    write_records(records, os.path.join(out_dir, "records.jsonl"))
    for m, params in enumerate(state.models):
        save_params(params, os.path.join(out_dir, f"model{m}.npz"))
    best = max(r.test_acc_ensemble for r in records)
    last3 = float(np.mean([r.test_acc_ensemble for r in records[-3:]]))
    print(
        f"best_acc={best:.4f} last3_acc={last3:.4f} "
        f"est_noise={records[-1].est_noise_fraction:.4f} out={out_dir}"
    )
    return 0


def cmd_audit(args) -> int:
    params = load_params(args.model)
    view = dx.load_csv_view(args.data)
    if view.n == 0:
        raise ValueError(f"{args.data}: no examples to audit")
    probs = softmax(forward(params, view.features))
    losses = LossVector.from_raw(losses_from_probs(probs, view.observed_labels))
    if view.n >= 4:
        gmm = fit_gmm_em(losses)
        w = np.full(view.n, 0.5) if gmm.degenerate else confidence_all(gmm, losses)
    else:
        w = np.full(view.n, 0.5)
    report = audit_top_losses(losses.raw, w, probs, view.observed_labels, args.k)
    report.to_csv(args.output)
    if args.losses_out:
        export_losses_csv(losses, w, args.losses_out)
        print(f"wrote {args.losses_out}: {view.n} rows")
    print(f"wrote {args.output}: {len(report.entries)} rows")
    return 0


def cmd_report(args) -> int:
    records = read_records(args.records)
    with open(args.output, "w", encoding="utf-8", newline="\n") as f:
        f.write(
            "round," + ",".join(GROUP_KEYS)
            + ",test_acc_model0,test_acc_ensemble,est_noise_fraction,"
            + "mean_w_clean,mean_w_noisy,degenerate_gmm\n"
        )
        for rec in records:
            groups = rec.groups.as_dict()
            cells = [str(rec.round)]
            cells += [repr(groups[key]) for key in GROUP_KEYS]
            cells += [
                repr(rec.test_acc_model0), repr(rec.test_acc_ensemble),
                repr(rec.est_noise_fraction), repr(rec.mean_w_clean),
                repr(rec.mean_w_noisy), str(rec.degenerate_gmm).lower(),
            ]
            f.write(",".join(cells) + "\n")
    print(f"wrote {args.output}: {len(records)} rows")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustlr",
        description="Noise-robust co-training with label refurbishment on synthetic datasets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a Gaussian-blob dataset CSV")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--spread", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("corrupt", help="inject label noise into a dataset CSV")
    p.add_argument("input")
    p.add_argument("--kind", choices=("symmetric", "asymmetric", "instance"), required=True)
    p.add_argument("--rate", type=float, help="symmetric rate, or pair-flip mass for asymmetric")
    p.add_argument("--matrix", help="CSV transition matrix for asymmetric noise")
    p.add_argument("--rule", default="boundary", help="instance-noise rule name")
    p.add_argument("--strength", type=float, help="instance-noise strength")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("train", help="run the full training pipeline")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--data", help="training CSV (overrides config)")
    p.add_argument("--eval-data", dest="eval_data", help="held-out CSV")
    p.add_argument("--out", help="output directory")
    p.add_argument("--preset", choices=("light", "heavy", "custom"))
    p.add_argument("--seed", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--warm-iters", dest="warm_iters", type=int)
    p.add_argument("--round-iters", dest="round_iters", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--reg-weight", dest="reg_weight", type=float)
    p.add_argument("--confidence-source", dest="confidence_source",
                   choices=("peer", "self", "ensemble"))
    p.add_argument("--pseudo-source", dest="pseudo_source", choices=("ensemble", "self"))
    p.add_argument("--no-refurbishment", dest="use_refurbishment",
                   action="store_false", default=None)
    p.add_argument("--no-strong-aug", dest="use_strong_aug", action="store_false", default=None)
    p.add_argument("--no-gmm", dest="use_gmm", action="store_false", default=None)
    p.add_argument("--no-cotrain", dest="use_cotrain", action="store_false", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("audit", help="rank a dataset's examples by loss under a trained model")
    p.add_argument("--model", required=True, help="model .npz written by train")
    p.add_argument("--data", required=True, help="dataset CSV to audit")
    p.add_argument("-k", type=int, default=50)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--losses-out", dest="losses_out",
                   help="also dump the full per-example loss/confidence table")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("report", help="flatten a records.jsonl into a plotting CSV")
    p.add_argument("--records", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen":
        if args.classes < 2:
            parser.error("--classes must be >= 2")
        if args.dim < 2:
            parser.error("--dim must be >= 2")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
