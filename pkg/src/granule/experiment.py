"""Experiment orchestration: config files, seed fan-out, and the runs the
CLI exposes (noise reports, training runs, mode/noise-grid comparisons).

One global seed drives everything. Each component receives its own
sub-seed through the named-stream derivation in :mod:`granule.seeding`
("synth-train", "synth-test", "noise", "ballgen", "pool", "train"), so a
config file never stores per-component seeds and reruns are byte-identical.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .ballgen import SplitConfig, generate, partition_stats
from .core import DomainError
from .noise import (NoiseSpec, SynthSpec, dataset_arrays, inject, noise_rates,
                    synthesize)
from .replay import ReplayConfig
from .seeding import derive_seed
from .trainer import TrainConfig, evaluate, save_params, train

SCHEMA_VERSION = 1


def dump_json(obj, indent: Optional[int] = 2) -> str:
    """Canonical JSON text: sorted keys, stable float repr."""
    return json.dumps(obj, sort_keys=True, indent=indent) + "\n"


def dump_json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


@dataclass(frozen=True)
class ExperimentConfig:
    """Composite config for one experiment; see README for the file format.

    Defaults are the tuned desk-scale setup: well-separated 6-class blobs,
    a purity threshold of 0.6 so whole-class regions can absorb up to 40%
    symmetric noise, size-weighted ball losses, and a replay pool that only
    admits multi-member pure balls (singletons under heavy noise are mostly
    mislabeled, and replaying them frozen re-injects the noise).
    """

    seed: int = 0
    synth: SynthSpec = SynthSpec(classes=6, per_class=200, dim=16,
                                 center_scale=8.0, std=1.0)
    test_per_class: int = 200
    noise: NoiseSpec = NoiseSpec(kind="symmetric", rate=0.0)
    split: SplitConfig = SplitConfig(purity_threshold=0.6, restarts=2,
                                     max_lloyd_iters=50, min_ball_size=1)
    replay: ReplayConfig = ReplayConfig(capacity=512, admit_purity=1.0,
                                        replay_fraction=0.1, admit_min_size=2)
    train: TrainConfig = TrainConfig(learning_rate=0.02, momentum=0.9,
                                     weight_decay=1e-4, batch_size=256,
                                     steps=1500, hidden=64, feature_dim=16,
                                     mode="gbc", loss_weighting="size_weighted")

    def __post_init__(self):
        if self.test_per_class < 1:
            raise DomainError("test_per_class must be positive")
        if self.seed < 0:
            raise DomainError("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        def jsonify(value):
            if isinstance(value, (tuple, list)):
                return [jsonify(v) for v in value]
            return value

        def strip(cfg, drop=("seed",)):
            d = dataclasses.asdict(cfg)
            for key in drop:
                d.pop(key, None)
            return {k: jsonify(v) for k, v in d.items()}

        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "synth": strip(self.synth),
            "test_per_class": self.test_per_class,
            "noise": strip(self.noise),
            "split": strip(self.split),
            "replay": strip(self.replay),
            "train": strip(self.train),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise DomainError("config must be a JSON object")
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise DomainError(f"unsupported config schema_version {version}")

        def build(section, factory, transform=None):
            payload = data.pop(section, {})
            if not isinstance(payload, dict):
                raise DomainError(f"config section '{section}' must be an object")
            if "seed" in payload:
                raise DomainError(
                    f"config section '{section}' must not set 'seed'; "
                    "sub-seeds derive from the global seed")
            if transform:
                payload = transform(payload)
            known = {f.name for f in dataclasses.fields(factory)}
            unknown = set(payload) - known
            if unknown:
                raise DomainError(f"unknown keys in '{section}': {sorted(unknown)}")
            return factory(**payload)

        def tuplify_pairs(payload):
            payload = dict(payload)
            if "flip_pairs" in payload:
                payload["flip_pairs"] = tuple(tuple(p) for p in payload["flip_pairs"])
            return payload

        def tuplify_decay(payload):
            payload = dict(payload)
            if "decay_points" in payload:
                payload["decay_points"] = tuple(payload["decay_points"])
            return payload

        kwargs = {
            "seed": int(data.pop("seed", 0)),
            "synth": build("synth", SynthSpec),
            "noise": build("noise", NoiseSpec, tuplify_pairs),
            "split": build("split", SplitConfig),
            "replay": build("replay", ReplayConfig),
            "train": build("train", TrainConfig, tuplify_decay),
        }
        if "test_per_class" in data:
            kwargs["test_per_class"] = int(data.pop("test_per_class"))
        if data:
            raise DomainError(f"unknown config keys: {sorted(data)}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def digest(self) -> str:
        return hashlib.sha256(dump_json(self.to_dict(), indent=None)
                              .encode("utf-8")).hexdigest()


def resolved_components(cfg: ExperimentConfig):
    """Fan the global seed out into fully seeded component configs."""
    return {
        "synth_train": dataclasses.replace(
            cfg.synth, seed=derive_seed(cfg.seed, "synth-train")),
        "synth_test": dataclasses.replace(
            cfg.synth, per_class=cfg.test_per_class,
            seed=derive_seed(cfg.seed, "synth-test")),
        "noise": dataclasses.replace(cfg.noise, seed=derive_seed(cfg.seed, "noise")),
        "split": dataclasses.replace(cfg.split, seed=derive_seed(cfg.seed, "ballgen")),
        "replay": dataclasses.replace(cfg.replay, seed=derive_seed(cfg.seed, "pool")),
        "train": dataclasses.replace(cfg.train, seed=derive_seed(cfg.seed, "train")),
    }


def build_datasets(cfg: ExperimentConfig):
    """(noisy train samples, clean test samples) for one experiment."""
    parts = resolved_components(cfg)
    train_set = synthesize(parts["synth_train"])
    if cfg.noise.rate > 0:
        train_set = inject(train_set, parts["noise"], num_classes=cfg.synth.classes)
    test_set = synthesize(parts["synth_test"])
    return train_set, test_set


def run_training(cfg: ExperimentConfig, mode: Optional[str] = None,
                 metrics_sink=None):
    """Train one model under ``cfg`` (mode optionally overridden).

    Returns (summary dict, metrics history, final state, replay pool).
    """
    parts = resolved_components(cfg)
    train_cfg = parts["train"]
    if mode is not None:
        train_cfg = dataclasses.replace(train_cfg, mode=mode)
    train_set, test_set = build_datasets(cfg)
    features, observed, clean = dataset_arrays(train_set)
    test_features, test_observed, _ = dataset_arrays(test_set)

    state, pool, history = train(features, observed, clean, train_cfg,
                                 parts["split"], parts["replay"],
                                 n_classes=cfg.synth.classes,
                                 metrics_sink=metrics_sink)
    accuracy = evaluate(state.params, test_features, test_observed)

    steps_per_epoch = max(1, math.ceil(features.shape[0] / train_cfg.batch_size))
    tail = history[-steps_per_epoch:]

    def mean_of(key, records):
        vals = [r[key] for r in records if r[key] is not None]
        return float(np.mean(vals)) if vals else None

    summary = {
        "schema_version": SCHEMA_VERSION,
        "mode": train_cfg.mode,
        "backward_mode": train_cfg.backward_mode,
        "loss_weighting": train_cfg.loss_weighting,
        "seed": cfg.seed,
        "steps": train_cfg.steps,
        "accuracy": accuracy,
        "final_loss": history[-1]["loss"],
        "mean_ball_count": mean_of("ball_count", history),
        "mean_noise_before": mean_of("noise_before", history),
        "mean_noise_after": mean_of("noise_after", history),
        "final_epoch_noise_after": mean_of("noise_after", tail),
        "pool_size": len(pool),
        "train_size": int(features.shape[0]),
        "test_size": int(test_features.shape[0]),
        "noise_rate": cfg.noise.rate,
        "config_digest": cfg.digest(),
    }
    return summary, history, state, pool


def run_train_command(cfg: ExperimentConfig, mode: Optional[str],
                      out_dir) -> dict:
    """Training run with artifacts: metrics.jsonl, checkpoint.gbck, pool.json,
    eval.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as fh:
        summary, _, state, pool = run_training(
            cfg, mode, metrics_sink=lambda rec: fh.write(dump_json_line(rec)))
    save_params(out / "checkpoint.gbck", state.params)
    (out / "pool.json").write_text(pool.to_json() + "\n", encoding="utf-8")
    (out / "eval.json").write_text(dump_json(summary), encoding="utf-8")
    return summary


def run_noise_report(dataset, purity_threshold: float, noise: NoiseSpec,
                     split: SplitConfig, seed: int) -> dict:
    """Inject noise, build balls, and measure before/after noise rates."""
    noise = dataclasses.replace(noise, seed=derive_seed(seed, "noise"))
    split = dataclasses.replace(split, purity_threshold=purity_threshold,
                                seed=derive_seed(seed, "ballgen"))
    noisy = inject(dataset, noise) if noise.rate > 0 else list(dataset)
    partition = generate(noisy, split)
    rates = noise_rates(noisy, partition)
    stats = partition_stats(partition)
    return {
        "schema_version": SCHEMA_VERSION,
        "rate_requested": noise.rate,
        "rate_realized": rates.sample_rate_before,
        "before": rates.sample_rate_before,
        "after_sample_weighted": rates.gb_sample_rate_after,
        "after_ball_level": rates.gb_ball_rate_after,
        "m": stats.ball_count,
        "mean_ball_size": stats.mean_size,
        "purity_threshold": purity_threshold,
        "noise_kind": noise.kind,
        "seed": seed,
    }


def run_compare(cfg: ExperimentConfig, grid: Sequence[float], n_seeds: int,
                progress=None) -> dict:
    """Both training modes across a noise grid, repeated over derived seeds.

    Each repeat r uses master seed ``derive_seed(cfg.seed, "compare-rep", r)``
    so the two modes see identical data within a (rate, repeat) cell.
    """
    if n_seeds < 1:
        raise DomainError("n_seeds must be positive")
    if any(not 0.0 <= r < 1.0 for r in grid):
        raise DomainError("noise grid rates must lie in [0, 1)")
    rows = []
    for rate in grid:
        per_mode = {"individual": [], "gbc": []}
        seeds = []
        for rep in range(n_seeds):
            rep_seed = derive_seed(cfg.seed, "compare-rep", rep)
            seeds.append(rep_seed)
            variant = dataclasses.replace(
                cfg, seed=rep_seed,
                noise=dataclasses.replace(cfg.noise, rate=float(rate)))
            for mode in ("individual", "gbc"):
                summary, _, _, _ = run_training(variant, mode)
                per_mode[mode].append(summary["accuracy"])
                if progress is not None:
                    progress(rate, rep, mode, summary["accuracy"])
        for mode in ("individual", "gbc"):
            accs = per_mode[mode]
            rows.append({
                "noise_rate": float(rate),
                "mode": mode,
                "accuracy_mean": float(np.mean(accs)),
                "accuracy_std": float(np.std(accs)),
                "accuracy_median": float(np.median(accs)),
                "accuracies": accs,
                "seeds": seeds,
            })
    return {
        "schema_version": SCHEMA_VERSION,
        "n_seeds": n_seeds,
        "grid": [float(r) for r in grid],
        "rows": rows,
        "config_digest": cfg.digest(),
    }


def compare_table_csv(result: dict) -> str:
    lines = ["noise_rate,mode,accuracy_mean,accuracy_std,n_seeds"]
    for row in result["rows"]:
        lines.append(f"{row['noise_rate']!r},{row['mode']},"
                     f"{row['accuracy_mean']!r},{row['accuracy_std']!r},"
                     f"{len(row['accuracies'])}")
    return "\n".join(lines) + "\n"
