"""Command-line entry points: allocate, train, privacy, embed.

Every subcommand accepts --config pointing at a flat key = value file;
per-field flags override file values.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .allocation import solve_allocation
from .coding import read_dataset_file, write_dataset_file
from .datasets import load_idx_dataset, stratified_head
from .embedding import derive_params, embed_matrix
from .experiment import (
    ExperimentConfig,
    build_profiles,
    load_config,
    run_experiment,
    write_metrics,
    _DOMAIN_PROFILES,
    _stream,
)
from .privacy import privacy_budget


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    from .experiment import _field_type, _parse_value

    config = load_config(args.config) if args.config else ExperimentConfig()
    for f in dataclasses.fields(ExperimentConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            setattr(config, f.name, _parse_value(str(raw), _field_type(f.name)))
    config.validate()
    return config


def _cmd_allocate(args) -> int:
    config = _resolve_config(args)
    profiles = build_profiles(
        config, config.num_classes, _stream(config.master_seed, _DOMAIN_PROFILES)
    )
    allocation = solve_allocation(profiles, config.m)
    print(
        json.dumps(
            {
                "t_star": allocation.t_star,
                "loads": list(allocation.loads),
                "expected_return": allocation.expected_return,
            },
            indent=2,
        )
    )
    return 0


def _cmd_train(args) -> int:
    config = _resolve_config(args)
    result = run_experiment(config)
    paths = write_metrics(result.traces, args.out, config)
    extra = {}
    if result.allocation is not None:
        extra["allocation"] = {
            "t_star": result.allocation.t_star,
            "loads": list(result.allocation.loads),
            "loads_int": result.loads_int,
            "expected_return": result.allocation.expected_return,
        }
    if result.privacy:
        extra["privacy"] = [
            {"client": i, "f_value": r.f_value, "epsilon_bits": r.epsilon,
             "u": r.u, "warning": r.warning}
            for i, r in enumerate(result.privacy)
        ]
    if extra:
        summary = Path(args.out) / "run_summary.json"
        summary.write_text(json.dumps(extra, indent=2) + "\n")
        paths.append(summary)
    for path in paths:
        print(path)
    return 0


def _cmd_embed(args) -> int:
    config = _resolve_config(args)
    if args.split == "train":
        feats, labels = load_idx_dataset(config.train_images, config.train_labels)
        per_class = config.train_per_class
    else:
        feats, labels = load_idx_dataset(config.test_images, config.test_labels)
        per_class = config.test_per_class
    if per_class > 0:
        feats, labels = stratified_head(feats, labels, per_class)
    params = derive_params(config.rff_seed, feats.shape[1], config.q, config.sigma)
    embedded = embed_matrix(params, feats, labels)
    write_dataset_file(args.out, embedded.features, embedded.labels)
    print(args.out)
    return 0


def _cmd_fixture(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .datasets import make_synthetic_digits, write_idx_files

    train = make_synthetic_digits(args.train_per_class, sample_seed=1)
    write_idx_files(*train, out / "train_images.idx", out / "train_labels.idx")
    test = make_synthetic_digits(args.test_per_class, sample_seed=2)
    write_idx_files(*test, out / "test_images.idx", out / "test_labels.idx")
    for name in ("train_images", "train_labels", "test_images", "test_labels"):
        print(out / f"{name}.idx")
    return 0


def _cmd_privacy(args) -> int:
    features, _ = read_dataset_file(args.input)
    report = privacy_budget(features, args.u, encoding=args.encoding)
    print(
        json.dumps(
            {
                "f_value": report.f_value,
                "epsilon_bits": report.epsilon if np.isfinite(report.epsilon) else "inf",
                "u": report.u,
                "warning": report.warning,
            },
            indent=2,
        )
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="codedfl",
        description="Coded federated learning simulator over edge networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_alloc = sub.add_parser("allocate", help="solve loads and deadline")
    _add_config_flags(p_alloc)
    p_alloc.set_defaults(func=_cmd_allocate)

    p_train = sub.add_parser("train", help="run the configured schemes")
    _add_config_flags(p_train)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.set_defaults(func=_cmd_train)

    p_embed = sub.add_parser("embed", help="embed an IDX dataset to a binary file")
    _add_config_flags(p_embed)
    p_embed.add_argument("--out", required=True, help="output file")
    p_embed.add_argument("--split", choices=("train", "test"), default="train")
    p_embed.set_defaults(func=_cmd_embed)

    p_priv = sub.add_parser("privacy", help="privacy budget of an embedded dataset")
    p_priv.add_argument("--input", required=True, help="embedded dataset file")
    p_priv.add_argument("--u", type=int, required=True, help="parity rows shared")
    p_priv.add_argument("--encoding", choices=("gaussian", "rademacher"),
                        default="gaussian")
    p_priv.set_defaults(func=_cmd_privacy)

    p_fix = sub.add_parser(
        "fixture", help="write a synthetic digit dataset in IDX format"
    )
    p_fix.add_argument("--out", required=True, help="output directory")
    p_fix.add_argument("--train-per-class", type=int, default=600)
    p_fix.add_argument("--test-per-class", type=int, default=100)
    p_fix.set_defaults(func=_cmd_fixture)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
