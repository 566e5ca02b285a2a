"""Command-line entry point.

Commands: ``synth`` (write a blob dataset as CSV), ``noise-report``
(inject noise, build balls, report before/after noise rates), ``train``
(one training run with metrics stream, checkpoint, and eval JSON), and
``compare`` (both modes across a noise grid and several seeds).

Every command is deterministic under --seed; the GRANULE_SEED environment
variable overrides any configured seed. Exit codes: 0 success, 2 input
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .ballgen import SplitConfig
from .core import DomainError, NumericalError
from .experiment import (ExperimentConfig, compare_table_csv, dump_json,
                         run_compare, run_noise_report, run_train_command)
from .noise import NoiseSpec, SynthSpec, read_csv, synthesize, write_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _parse_flip_pairs(text: str) -> tuple[tuple[int, int], ...]:
    """'0:1,2:3' -> ((0, 1), (2, 3))."""
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        left, sep, right = chunk.partition(":")
        if not sep:
            raise DomainError(f"flip pair '{chunk}' must look like A:B")
        try:
            pairs.append((int(left), int(right)))
        except ValueError:
            raise DomainError(f"flip pair '{chunk}' must contain integers") from None
    return tuple(pairs)


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise DomainError(f"bad noise grid '{text}'") from None


def _effective_seed(seed: int) -> int:
    override = os.environ.get("GRANULE_SEED")
    if override is None:
        return seed
    try:
        return int(override)
    except ValueError:
        raise DomainError(f"GRANULE_SEED must be an integer, got '{override}'") from None


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return dataclasses.replace(cfg, seed=_effective_seed(cfg.seed))


def cmd_synth(args) -> int:
    spec = SynthSpec(classes=args.classes, per_class=args.per_class, dim=args.dim,
                     center_scale=args.center_scale, std=args.std,
                     seed=_effective_seed(args.seed))
    dataset = synthesize(spec)
    write_csv(args.out, dataset)
    print(f"wrote {len(dataset)} samples ({spec.classes} classes x "
          f"{spec.per_class}, dim {spec.dim}) to {args.out}")
    return EXIT_OK


def cmd_noise_report(args) -> int:
    dataset = read_csv(args.data)
    noise = NoiseSpec(kind=args.noise_kind, rate=args.noise_rate,
                      flip_pairs=_parse_flip_pairs(args.flip_pairs))
    split = SplitConfig(purity_threshold=args.purity, restarts=args.restarts)
    report = run_noise_report(dataset, args.purity, noise, split,
                              _effective_seed(args.seed))
    text = dump_json(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"noise {report['before']:.4f} -> {report['after_sample_weighted']:.4f} "
              f"(sample-weighted) across {report['m']} balls; report at {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    summary = run_train_command(cfg, args.mode, args.out_dir)
    print(f"mode={summary['mode']} seed={summary['seed']} "
          f"accuracy={summary['accuracy']:.4f} final_loss={summary['final_loss']:.4f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    grid = _parse_grid(args.noise_grid)
    if not grid:
        raise DomainError("noise grid is empty")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def progress(rate, rep, mode, acc):
        print(f"rate={rate} rep={rep} mode={mode} accuracy={acc:.4f}", file=sys.stderr)

    result = run_compare(cfg, grid, args.seeds,
                         progress=progress if args.verbose else None)
    (out / "compare.json").write_text(dump_json(result), encoding="utf-8")
    (out / "compare.csv").write_text(compare_table_csv(result), encoding="utf-8")
    for row in result["rows"]:
        print(f"rate={row['noise_rate']:.2f} mode={row['mode']:<10} "
              f"accuracy={row['accuracy_mean']:.4f} +/- {row['accuracy_std']:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="granule",
        description="Granular-ball training and label-noise experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic blob dataset as CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--center-scale", type=float, default=6.0)
    p.add_argument("--std", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("noise-report",
                       help="inject noise, build balls, report noise rates")
    p.add_argument("--data", required=True, help="dataset CSV with clean labels")
    p.add_argument("--purity", type=float, default=0.9)
    p.add_argument("--noise-rate", type=float, default=0.0)
    p.add_argument("--noise-kind", choices=("symmetric", "asymmetric"),
                   default="symmetric")
    p.add_argument("--flip-pairs", default="", help="asymmetric pairs, e.g. 0:1,2:3")
    p.add_argument("--restarts", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="report path (stdout if omitted)")
    p.set_defaults(func=cmd_noise_report)

    p = sub.add_parser("train", help="run one training experiment")
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.add_argument("--mode", choices=("individual", "gbc"), default=None)
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="compare modes across a noise grid")
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.add_argument("--noise-grid", required=True, help="comma list, e.g. 0,0.1,0.4")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
