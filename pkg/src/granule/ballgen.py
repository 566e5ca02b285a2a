"""Adaptive granular-ball generation by recursive purity-constrained 2-means.

A FIFO queue starts with the whole input as one candidate ball. Each
dequeued ball either satisfies the purity threshold (or cannot shrink
further) and is finalized, or is split into two sub-balls with 2-means on
its feature vectors and both halves are re-enqueued. Every split strictly
reduces the size of at least one child and singletons never split, so the
loop always terminates, including at threshold 1.0.

Finalized balls are returned sorted by their smallest member index, which
fixes one canonical order: reruns with the same inputs and seed are
bit-identical, and an all-singleton partition lines up with the input rows.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DomainError, GranularBall, LabeledSample, Partition, purity


@dataclass(frozen=True)
class SplitConfig:
    """Knobs for ball generation.

    purity_threshold: balls split while their purity is below this and they
        still have more than ``min_ball_size`` members. Must lie in (0.5, 1].
    restarts: independent 2-means restarts per split; the lowest-SSE restart wins.
    """

    purity_threshold: float = 0.9
    max_lloyd_iters: int = 50
    restarts: int = 4
    seed: int = 0
    min_ball_size: int = 1

    def __post_init__(self):
        if not 0.5 < self.purity_threshold <= 1.0:
            raise DomainError(
                f"purity_threshold must lie in (0.5, 1.0], got {self.purity_threshold}")
        if self.max_lloyd_iters < 1:
            raise DomainError("max_lloyd_iters must be positive")
        if self.restarts < 1:
            raise DomainError("restarts must be positive")
        if self.min_ball_size < 1:
            raise DomainError("min_ball_size must be positive")
        if self.seed < 0:
            raise DomainError("seed must be a non-negative integer")


@dataclass(frozen=True, eq=False)
class TwoMeansResult:
    """Outcome of one 2-means run: per-point cluster ids, both centroids, SSE.

    ``sse_traces`` (one per restart, present when requested) lists the SSE
    after every assign/update sweep; within a restart it is non-increasing.
    """

    assignment: np.ndarray
    centroids: np.ndarray
    sse: float
    sse_traces: Optional[tuple[tuple[float, ...], ...]] = None


def _lloyd(points: np.ndarray, init: np.ndarray, max_iters: int):
    """Lloyd iterations from the given pair of centroids.

    Ties in assignment go to cluster 0. If a sweep empties a cluster, the
    point farthest from the surviving centroid (lowest index on ties) is
    moved over before centroids update, which keeps both clusters non-empty
    without breaking the monotone decrease of the SSE.
    """
    centroids = np.asarray(init, dtype=np.float64).copy()
    assign: Optional[np.ndarray] = None
    trace: list[float] = []
    for _ in range(max_iters):
        d0 = ((points - centroids[0]) ** 2).sum(axis=1)
        d1 = ((points - centroids[1]) ** 2).sum(axis=1)
        new_assign = d1 < d0
        if new_assign.all():
            new_assign[int(np.argmax(d1))] = False
        elif not new_assign.any():
            new_assign[int(np.argmax(d0))] = True
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        centroids = np.stack([points[~assign].mean(axis=0), points[assign].mean(axis=0)])
        sse = float(((points[~assign] - centroids[0]) ** 2).sum()
                    + ((points[assign] - centroids[1]) ** 2).sum())
        trace.append(sse)
    return assign.astype(np.int64), centroids, trace[-1], tuple(trace)


def _seed_pair(points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Pick one point uniformly, a second with probability ~ squared distance."""
    n = points.shape[0]
    first = int(rng.integers(n))
    d2 = ((points - points[first]) ** 2).sum(axis=1)
    second = int(rng.choice(n, p=d2 / d2.sum()))
    return points[[first, second]]


def two_means(points: np.ndarray, cfg: SplitConfig, rng: np.random.Generator, *,
              exhaustive: bool = False, collect_traces: bool = False) -> TwoMeansResult:
    """Split points into two non-empty clusters minimizing within-cluster SSE.

    Runs Lloyd's algorithm from ``cfg.restarts`` distance-weighted seedings
    and keeps the lowest-SSE result. With ``exhaustive=True`` every distinct
    pair of input points is tried as the initial centroids instead, which on
    small inputs recovers the globally optimal bipartition.

    Identical points cannot be separated by distance, so an all-identical
    input is split positionally: first half vs second half of the list.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise DomainError(f"two_means needs at least 2 points, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise DomainError("two_means input contains NaN or Inf")
    n = points.shape[0]

    if np.all(points == points[0]):
        assign = np.zeros(n, dtype=np.int64)
        assign[n // 2:] = 1
        centroids = np.stack([points[0], points[0]])
        return TwoMeansResult(assignment=assign, centroids=centroids, sse=0.0,
                              sse_traces=((0.0,),) if collect_traces else None)

    if exhaustive:
        inits = [points[[i, j]] for i in range(n) for j in range(i + 1, n)
                 if not np.array_equal(points[i], points[j])]
    else:
        inits = [_seed_pair(points, rng) for _ in range(cfg.restarts)]

    best = None
    traces: list[tuple[float, ...]] = []
    for init in inits:
        assign, centroids, sse, trace = _lloyd(points, init, cfg.max_lloyd_iters)
        traces.append(trace)
        if best is None or sse < best[2]:
            best = (assign, centroids, sse)
    assign, centroids, sse = best
    return TwoMeansResult(assignment=assign, centroids=centroids, sse=sse,
                          sse_traces=tuple(traces) if collect_traces else None)


def generate_from_arrays(features: np.ndarray, labels: np.ndarray, cfg: SplitConfig,
                         ids: Optional[np.ndarray] = None) -> Partition:
    """Array-level ball generation; ``ids`` names the samples in the output.

    Defaults to row positions, which is what batch-level callers want.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise DomainError(f"expected a non-empty [N, d] feature matrix, got {features.shape}")
    if not np.all(np.isfinite(features)):
        raise DomainError("feature matrix contains NaN or Inf")
    n = features.shape[0]
    if labels.shape != (n,):
        raise DomainError(f"labels shape {labels.shape} does not match {n} rows")
    if ids is None:
        ids = np.arange(n, dtype=np.int64)
    else:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.shape != (n,) or len(set(ids.tolist())) != n:
            raise DomainError("ids must be unique and aligned with rows")

    rng = np.random.default_rng(cfg.seed)
    min_size = max(1, cfg.min_ball_size)
    queue: deque[np.ndarray] = deque([np.arange(n, dtype=np.int64)])
    balls: list[GranularBall] = []
    while queue:
        pos = queue.popleft()
        majority, pur = purity(labels[pos])
        if pur < cfg.purity_threshold and pos.size > min_size:
            block = features[pos]
            if np.all(block == block[0]):
                # 2-means cannot separate identical points; peel off the
                # majority-label members so the recursion keeps shrinking.
                mask = labels[pos] == majority
                left, right = pos[mask], pos[~mask]
            else:
                split = two_means(block, cfg, rng)
                left, right = pos[split.assignment == 0], pos[split.assignment == 1]
            queue.append(left)
            queue.append(right)
        else:
            balls.append(GranularBall(
                members=tuple(ids[pos].tolist()),
                center=features[pos].mean(axis=0),
                label=majority,
                purity=pur,
            ))
    balls.sort(key=lambda b: b.members[0])
    return Partition(balls=tuple(balls), source_size=n)


def generate(samples: Sequence[LabeledSample], cfg: SplitConfig) -> Partition:
    """Partition labeled samples into granular balls (observed labels only).

    Every returned ball satisfies ``purity >= cfg.purity_threshold`` or has
    at most ``min_ball_size`` members, and the balls disjointly cover the
    input. Ball members carry the samples' own ``index`` values.
    """
    if len(samples) == 0:
        raise DomainError("cannot generate balls from an empty sample list")
    try:
        features = np.stack([s.features for s in samples])
    except ValueError:
        raise DomainError("samples have inconsistent feature dimensions") from None
    labels = np.asarray([s.observed_label for s in samples], dtype=np.int64)
    ids = np.asarray([s.index for s in samples], dtype=np.int64)
    return generate_from_arrays(features, labels, cfg, ids=ids)


@dataclass(frozen=True)
class PartitionStats:
    """Summary counts for one partition."""

    ball_count: int
    mean_size: float
    size_hist: tuple[tuple[int, int], ...]          # (size, count), ascending
    purity_hist: tuple[tuple[float, float, int], ...]  # (low, high, count), 10 bins

    def to_dict(self) -> dict:
        return {
            "ball_count": self.ball_count,
            "mean_size": self.mean_size,
            "size_hist": [[s, c] for s, c in self.size_hist],
            "purity_hist": [[lo, hi, c] for lo, hi, c in self.purity_hist],
        }


def partition_stats(partition: Partition) -> PartitionStats:
    """Ball count, mean size, and size/purity histograms, deterministically ordered."""
    sizes = np.asarray([b.size for b in partition.balls], dtype=np.int64)
    purities = np.asarray([b.purity for b in partition.balls], dtype=np.float64)
    size_pairs = sorted(zip(*np.unique(sizes, return_counts=True)))
    edges = np.linspace(0.0, 1.0, 11)
    counts, _ = np.histogram(purities, bins=edges)  # last bin closed at 1.0
    purity_bins = tuple(
        (float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(10))
    return PartitionStats(
        ball_count=partition.ball_count,
        mean_size=float(sizes.mean()),
        size_hist=tuple((int(s), int(c)) for s, c in size_pairs),
        purity_hist=purity_bins,
    )
