"""The granular-ball batch transformation and its gradient routing.

Forward replaces a batch of per-sample feature rows with one center row
per ball; backward routes each ball's gradient back to the ball's member
rows. Two routing modes exist:

* ``mean_scaled`` (default): each member receives ``grad_ball / ball_size``.
  This is the exact adjoint of the center mean, so composed losses pass
  finite-difference checks with the partition held fixed.
* ``replicate``: each member receives ``grad_ball`` unchanged, i.e. the
  ball error is copied to every member. Row-wise it equals the
  ``mean_scaled`` gradient times the ball size.

The ball structure itself is treated as a routing decision, like pooling
indices: gradients never flow through the clustering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ballgen import SplitConfig, generate_from_arrays
from .core import DomainError, Partition

BACKWARD_MODES = ("replicate", "mean_scaled")


@dataclass(frozen=True, eq=False)
class GbcForwardRecord:
    """Bookkeeping captured by forward so backward can route gradients."""

    partition: Partition
    input_dim: int
    backward_mode: str

    def __post_init__(self):
        if self.backward_mode not in BACKWARD_MODES:
            raise DomainError(f"backward_mode must be one of {BACKWARD_MODES}")


def forward(batch_features: np.ndarray, batch_labels: Sequence[int], cfg: SplitConfig,
            backward_mode: str = "mean_scaled"):
    """Map an [N_b, d] batch to ([N_gb, d] ball centers, ball labels, record).

    Ball members index rows of the batch. N_gb <= N_b always holds.
    """
    batch_features = np.asarray(batch_features, dtype=np.float64)
    if batch_features.ndim != 2:
        raise DomainError(f"expected an [N, d] batch, got shape {batch_features.shape}")
    labels = np.asarray(batch_labels, dtype=np.int64)
    if labels.shape != (batch_features.shape[0],):
        raise DomainError("batch labels are not aligned with feature rows")
    partition = generate_from_arrays(batch_features, labels, cfg)
    centers = np.stack([b.center for b in partition.balls])
    ball_labels = np.asarray([b.label for b in partition.balls], dtype=np.int64)
    record = GbcForwardRecord(partition=partition, input_dim=batch_features.shape[1],
                              backward_mode=backward_mode)
    return centers, ball_labels, record


def route_gradients(grad_balls: np.ndarray, ball_rows: Sequence[np.ndarray], n_rows: int,
                    mode: str) -> np.ndarray:
    """Scatter per-ball gradient rows onto member rows, accumulating overlaps.

    ``ball_rows[i]`` lists the batch rows belonging to ball i. Rows claimed
    by several balls (possible when replayed balls overlap) receive the sum
    of their contributions.
    """
    if mode not in BACKWARD_MODES:
        raise DomainError(f"backward mode must be one of {BACKWARD_MODES}")
    grad_balls = np.asarray(grad_balls, dtype=np.float64)
    if grad_balls.ndim != 2 or grad_balls.shape[0] != len(ball_rows):
        raise DomainError(
            f"gradient has {grad_balls.shape[0] if grad_balls.ndim == 2 else '?'} rows "
            f"but there are {len(ball_rows)} balls")
    out = np.zeros((n_rows, grad_balls.shape[1]), dtype=np.float64)
    for i, rows in enumerate(ball_rows):
        g = grad_balls[i]
        if mode == "mean_scaled":
            g = g / len(rows)
        np.add.at(out, np.asarray(rows, dtype=np.int64), g)
    return out


def backward(grad_ball_centers: np.ndarray, record: GbcForwardRecord) -> np.ndarray:
    """Route [N_gb, d] ball-center gradients back to an [N_b, d] batch gradient."""
    grad_ball_centers = np.asarray(grad_ball_centers, dtype=np.float64)
    expected = (record.partition.ball_count, record.input_dim)
    if grad_ball_centers.shape != expected:
        raise DomainError(
            f"gradient shape {grad_ball_centers.shape} does not match record {expected}")
    rows = [np.asarray(b.members, dtype=np.int64) for b in record.partition.balls]
    return route_gradients(grad_ball_centers, rows, record.partition.source_size,
                           record.backward_mode)


def inference_forward(batch_features: np.ndarray) -> np.ndarray:
    """Identity map: at inference every sample is its own ball."""
    batch_features = np.asarray(batch_features, dtype=np.float64)
    if batch_features.ndim != 2 or batch_features.shape[0] < 1:
        raise DomainError("inference_forward needs a non-empty [N, d] batch")
    return batch_features
