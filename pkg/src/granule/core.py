"""Core domain types: labeled samples, granular balls, and partitions.

A granular ball is a non-empty group of samples treated as one training
unit. It carries the majority label of its members, the fraction of
members holding that label (purity), and the arithmetic mean of the
member feature vectors (center). All types here are immutable after
construction and safe to share across threads; the two operations
(`purity`, `center`) are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class DomainError(ValueError):
    """An input violates an operation's domain (empty, mismatched, out of range)."""


class NumericalError(RuntimeError):
    """A computation produced a non-finite value."""


def as_features(values, dim: Optional[int] = None) -> np.ndarray:
    """Coerce to a 1-D float64 feature vector; reject NaN/Inf and dim mismatches."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise DomainError(f"feature vector must be 1-D and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("feature vector contains NaN or Inf")
    if dim is not None and arr.size != dim:
        raise DomainError(f"feature vector has dimension {arr.size}, expected {dim}")
    return arr


def purity(labels_of_members: Sequence[int]) -> tuple[int, float]:
    """Majority label and its member fraction for one ball.

    Ties are broken toward the smallest class id so results are stable
    across runs and platforms. Purity is always in (0, 1]; it equals 1
    exactly when all members share one label.
    """
    labels = np.asarray(labels_of_members, dtype=np.int64)
    if labels.size == 0:
        raise DomainError("purity of an empty member list is undefined")
    if labels.min() < 0:
        raise DomainError("class ids must be non-negative")
    counts = np.bincount(labels)
    majority = int(np.argmax(counts))  # argmax picks the smallest id on ties
    return majority, float(counts[majority]) / float(labels.size)


def center(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Coordinate-wise arithmetic mean of a non-empty set of same-dimension vectors."""
    if len(vectors) == 0:
        raise DomainError("center of an empty vector list is undefined")
    dim = np.asarray(vectors[0]).shape
    for v in vectors:
        if np.asarray(v).shape != dim:
            raise DomainError("center requires all vectors to share one dimension")
    return np.mean(np.asarray(vectors, dtype=np.float64), axis=0)


@dataclass(frozen=True)
class LabeledSample:
    """A feature vector with an observed label and an optional clean label.

    The clean label exists only so noise can be measured after the fact;
    training code never reads it.
    """

    index: int
    features: np.ndarray
    observed_label: int
    clean_label: Optional[int] = None

    def __post_init__(self):
        if self.index < 0:
            raise DomainError(f"sample index must be non-negative, got {self.index}")
        if self.observed_label < 0:
            raise DomainError("observed_label must be non-negative")
        if self.clean_label is not None and self.clean_label < 0:
            raise DomainError("clean_label must be non-negative")
        object.__setattr__(self, "features", as_features(self.features))


@dataclass(frozen=True, eq=False)
class GranularBall:
    """A ball: member sample indices, center vector, majority label, purity."""

    members: tuple[int, ...]
    center: np.ndarray
    label: int
    purity: float

    def __post_init__(self):
        if len(self.members) == 0:
            raise DomainError("a granular ball must have at least one member")
        if not 0.0 < self.purity <= 1.0:
            raise DomainError(f"purity must lie in (0, 1], got {self.purity}")
        object.__setattr__(self, "members", tuple(sorted(int(m) for m in self.members)))
        object.__setattr__(self, "center", as_features(self.center))

    @property
    def size(self) -> int:
        return len(self.members)

    @classmethod
    def from_members(cls, member_ids: Sequence[int], member_features: np.ndarray,
                     member_labels: Sequence[int]) -> "GranularBall":
        """Build a ball with its label, purity, and center computed from members."""
        label, pur = purity(member_labels)
        ctr = np.asarray(member_features, dtype=np.float64).mean(axis=0)
        return cls(members=tuple(member_ids), center=ctr, label=label, purity=pur)


@dataclass(frozen=True, eq=False)
class Partition:
    """A disjoint cover of an input batch by granular balls."""

    balls: tuple[GranularBall, ...]
    source_size: int

    def __post_init__(self):
        object.__setattr__(self, "balls", tuple(self.balls))
        total = sum(b.size for b in self.balls)
        if total != self.source_size:
            raise DomainError(
                f"ball sizes sum to {total} but partition covers {self.source_size} samples")
        seen: set[int] = set()
        for b in self.balls:
            seen.update(b.members)
        if len(seen) != self.source_size:
            raise DomainError("partition members are not disjoint")

    @property
    def ball_count(self) -> int:
        return len(self.balls)

    def member_ids(self) -> np.ndarray:
        """All covered sample indices, ascending."""
        out = np.fromiter((m for b in self.balls for m in b.members), dtype=np.int64)
        out.sort()
        return out
