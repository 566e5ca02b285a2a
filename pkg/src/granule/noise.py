"""Synthetic datasets, CSV ingestion, label-noise injection, and the
before/after noise-rate measurements.

Noise is injected with exact per-class counts rather than Bernoulli draws
so realized rates are reproducible: symmetric noise relabels exactly
``floor(rate * class_count)`` samples per class to a uniformly random
different class; asymmetric noise flips that many samples between each
designated pair of confusable classes, in both directions.

CSV format: header ``f0,...,f{d-1},label[,clean_label]``, one sample per
row, 64-bit floats, UTF-8. Ragged rows are rejected with the row number.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DomainError, LabeledSample, Partition, purity


@dataclass(frozen=True)
class SynthSpec:
    """Gaussian blob mixture: one spherical blob per class.

    Class means sit on scaled coordinate axes when ``classes <= dim``
    (pairwise distance ``center_scale * sqrt(2)``), otherwise on seeded
    random unit directions scaled by ``center_scale``.
    """

    classes: int = 10
    per_class: int = 500
    dim: int = 16
    center_scale: float = 6.0
    std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise DomainError("need at least 2 classes")
        if self.per_class < 1:
            raise DomainError("per_class must be positive")
        if self.dim < 1:
            raise DomainError("dim must be positive")
        if self.std <= 0:
            raise DomainError("std must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "symmetric"
    rate: float = 0.0
    flip_pairs: tuple[tuple[int, int], ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("symmetric", "asymmetric"):
            raise DomainError("noise kind must be 'symmetric' or 'asymmetric'")
        if not 0.0 <= self.rate < 1.0:
            raise DomainError(f"noise rate must lie in [0, 1), got {self.rate}")
        pairs = tuple((int(a), int(b)) for a, b in self.flip_pairs)
        object.__setattr__(self, "flip_pairs", pairs)
        if self.kind == "asymmetric":
            if not pairs:
                raise DomainError("asymmetric noise needs at least one flip pair")
            touched: set[int] = set()
            for a, b in pairs:
                if a == b:
                    raise DomainError("flip pairs must join distinct classes")
                if a in touched or b in touched:
                    raise DomainError("each class may appear in at most one flip pair")
                touched.update((a, b))


def class_means(spec: SynthSpec) -> np.ndarray:
    """[C, d] matrix of blob centers."""
    if spec.classes <= spec.dim:
        means = np.zeros((spec.classes, spec.dim))
        means[np.arange(spec.classes), np.arange(spec.classes)] = spec.center_scale
        return means
    rng = np.random.default_rng(spec.seed)
    directions = rng.normal(size=(spec.classes, spec.dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * spec.center_scale


def synthesize(spec: SynthSpec) -> list[LabeledSample]:
    """Deterministic blob dataset; clean labels equal observed labels."""
    rng = np.random.default_rng(spec.seed)
    means = class_means(spec)
    samples = []
    index = 0
    for cls in range(spec.classes):
        block = means[cls] + spec.std * rng.normal(size=(spec.per_class, spec.dim))
        for row in block:
            samples.append(LabeledSample(index=index, features=row,
                                         observed_label=cls, clean_label=cls))
            index += 1
    return samples


def inject(dataset: Sequence[LabeledSample], spec: NoiseSpec,
           num_classes: Optional[int] = None) -> list[LabeledSample]:
    """Return a copy of the dataset with observed labels corrupted.

    Clean labels and sample count are preserved. Every flip lands on a
    different class than the clean label by construction.
    """
    if any(s.clean_label is None for s in dataset):
        raise DomainError("noise injection needs clean labels on every sample")
    if num_classes is None:
        num_classes = 1 + max(max(s.observed_label, s.clean_label) for s in dataset)
    if spec.kind == "asymmetric":
        for a, b in spec.flip_pairs:
            if a >= num_classes or b >= num_classes:
                raise DomainError(f"flip pair ({a}, {b}) references a missing class")

    rng = np.random.default_rng(spec.seed)
    new_observed = {s.index: s.observed_label for s in dataset}
    by_class: dict[int, list[int]] = {}
    for s in dataset:
        by_class.setdefault(s.clean_label, []).append(s.index)

    if spec.kind == "symmetric":
        for cls in sorted(by_class):
            members = by_class[cls]
            n_flip = int(spec.rate * len(members))
            if n_flip == 0:
                continue
            picked = rng.choice(len(members), size=n_flip, replace=False)
            for i in picked:
                wrong = int(rng.integers(num_classes - 1))
                if wrong >= cls:
                    wrong += 1
                new_observed[members[i]] = wrong
    else:
        for a, b in spec.flip_pairs:
            for src, dst in ((a, b), (b, a)):
                members = by_class.get(src, [])
                n_flip = int(spec.rate * len(members))
                if n_flip == 0:
                    continue
                picked = rng.choice(len(members), size=n_flip, replace=False)
                for i in picked:
                    new_observed[members[i]] = dst

    return [LabeledSample(index=s.index, features=s.features,
                          observed_label=new_observed[s.index],
                          clean_label=s.clean_label) for s in dataset]


@dataclass(frozen=True)
class NoiseRates:
    """Noise measured before and after ball-label replacement.

    sample_rate_before: fraction of samples whose observed label is wrong.
    gb_sample_rate_after: fraction of samples whose ball's label differs
        from their clean label. This is the effective noise the classifier
        trains against.
    gb_ball_rate_after: fraction of balls whose label differs from the
        majority clean label of their members.
    """

    sample_rate_before: float
    gb_sample_rate_after: float
    gb_ball_rate_after: float


def noise_rates(dataset: Sequence[LabeledSample], partition: Partition) -> NoiseRates:
    by_index = {s.index: s for s in dataset}
    if any(s.clean_label is None for s in dataset):
        raise DomainError("noise rates need clean labels on every sample")
    covered = partition.member_ids()
    if len(by_index) != covered.size or any(int(i) not in by_index for i in covered):
        raise DomainError("partition does not cover exactly the dataset indices")

    before = sum(1 for s in dataset if s.observed_label != s.clean_label)
    wrong_samples = 0
    wrong_balls = 0
    for ball in partition.balls:
        cleans = [by_index[m].clean_label for m in ball.members]
        wrong_samples += sum(1 for c in cleans if c != ball.label)
        clean_majority, _ = purity(cleans)
        wrong_balls += int(clean_majority != ball.label)
    n = len(dataset)
    return NoiseRates(
        sample_rate_before=before / n,
        gb_sample_rate_after=wrong_samples / n,
        gb_ball_rate_after=wrong_balls / partition.ball_count,
    )


def dataset_arrays(dataset: Sequence[LabeledSample]):
    """(features [N, d], observed [N], clean [N] or None) in index order.

    Requires indices to be exactly 0..N-1 so array positions double as
    sample ids, which is what the trainer expects.
    """
    if len(dataset) == 0:
        raise DomainError("empty dataset")
    ordered = sorted(dataset, key=lambda s: s.index)
    if ordered[0].index != 0 or ordered[-1].index != len(ordered) - 1:
        raise DomainError("dataset indices must be exactly 0..N-1")
    features = np.stack([s.features for s in ordered])
    observed = np.asarray([s.observed_label for s in ordered], dtype=np.int64)
    if all(s.clean_label is not None for s in ordered):
        clean = np.asarray([s.clean_label for s in ordered], dtype=np.int64)
    else:
        clean = None
    return features, observed, clean


def write_csv(path, dataset: Sequence[LabeledSample]) -> None:
    if len(dataset) == 0:
        raise DomainError("refusing to write an empty dataset")
    dim = dataset[0].features.size
    with_clean = all(s.clean_label is not None for s in dataset)
    header = [f"f{i}" for i in range(dim)] + ["label"] + (["clean_label"] if with_clean else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in sorted(dataset, key=lambda x: x.index):
            row = [repr(v) for v in s.features.tolist()] + [str(s.observed_label)]
            if with_clean:
                row.append(str(s.clean_label))
            writer.writerow(row)


def read_csv(path) -> list[LabeledSample]:
    """Parse the documented CSV layout; raises DomainError naming the bad row."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DomainError("CSV file is empty") from None
        expected = None
        with_clean = False
        if header and header[-1] == "clean_label":
            with_clean = True
            header = header[:-1]
        if not header or header[-1] != "label":
            raise DomainError("CSV header must end with 'label' or 'label,clean_label'")
        dim = len(header) - 1
        if dim < 1 or header[:dim] != [f"f{i}" for i in range(dim)]:
            raise DomainError("CSV header must start with columns f0..f{d-1}")
        expected = dim + 1 + int(with_clean)

        samples = []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != expected:
                raise DomainError(
                    f"row {row_num}: expected {expected} fields, got {len(row)}")
            try:
                feats = np.asarray([float(v) for v in row[:dim]])
                label = int(row[dim])
                clean = int(row[dim + 1]) if with_clean else None
            except ValueError as exc:
                raise DomainError(f"row {row_num}: {exc}") from None
            try:
                samples.append(LabeledSample(index=len(samples), features=feats,
                                             observed_label=label, clean_label=clean))
            except DomainError as exc:
                raise DomainError(f"row {row_num}: {exc}") from None
    if not samples:
        raise DomainError("CSV contains a header but no samples")
    return samples
