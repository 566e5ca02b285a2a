"""Granular-ball computing for training classifiers under label noise.

Batches of labeled feature vectors are partitioned into purity-constrained
granular balls; a classifier is trained on ball labels instead of
per-sample labels, with ball gradients routed back to member samples and
high-purity balls replayed from an experience pool.
"""

from .ballgen import (PartitionStats, SplitConfig, TwoMeansResult, generate,
                      generate_from_arrays, partition_stats, two_means)
from .core import (DomainError, GranularBall, LabeledSample, NumericalError,
                   Partition, center, purity)
from .experiment import ExperimentConfig, run_compare, run_noise_report, run_training
from .layer import GbcForwardRecord, backward, forward, inference_forward
from .noise import (NoiseRates, NoiseSpec, SynthSpec, dataset_arrays, inject,
                    noise_rates, read_csv, synthesize, write_csv)
from .replay import EmpiricalBall, ReplayConfig, ReplayPool, refresh_centers
from .seeding import derive_seed, stream
from .trainer import (ModelParams, TrainConfig, TrainState, evaluate, init_params,
                      load_params, loss_and_grads, save_params, train, train_step)

__version__ = "0.1.0"

__all__ = [
    "DomainError", "NumericalError", "LabeledSample", "GranularBall", "Partition",
    "purity", "center",
    "SplitConfig", "TwoMeansResult", "two_means", "generate", "generate_from_arrays",
    "partition_stats", "PartitionStats",
    "GbcForwardRecord", "forward", "backward", "inference_forward",
    "EmpiricalBall", "ReplayConfig", "ReplayPool", "refresh_centers",
    "ModelParams", "TrainConfig", "TrainState", "init_params", "train", "train_step",
    "evaluate", "loss_and_grads", "save_params", "load_params",
    "SynthSpec", "NoiseSpec", "NoiseRates", "synthesize", "inject", "noise_rates",
    "read_csv", "write_csv", "dataset_arrays",
    "ExperimentConfig", "run_training", "run_compare", "run_noise_report",
    "derive_seed", "stream",
    "__version__",
]
