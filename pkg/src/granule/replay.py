"""Experience pool of high-purity granular balls.

Balls whose purity clears the admission threshold are stored with the
dataset-level indices of their members. Later training steps draw balls
uniformly without replacement, pull the members back into the batch, and
recompute each drawn ball's center from the members' current feature
vectors, so stored centers never go stale. The pool is capacity-bounded
with oldest-first eviction (admission step, then insertion order).

The pool is a single-owner mutable structure: one writer at a time.
Sampled snapshots are immutable and safe to hand across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import DomainError, GranularBall


@dataclass(frozen=True, eq=False)
class EmpiricalBall:
    """A pooled ball: dataset-level member indices plus frozen label/purity."""

    members: tuple[int, ...]
    label: int
    center: np.ndarray
    purity_at_admission: float
    admitted_step: int

    def __post_init__(self):
        if len(self.members) == 0:
            raise DomainError("an empirical ball must have at least one member")
        object.__setattr__(self, "members", tuple(int(m) for m in self.members))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ReplayConfig:
    """Pool policy. ``admit_min_size`` > 1 keeps trivially-pure singletons
    out of the pool; under heavy label noise most single-member balls carry
    a wrong label, and replaying them frozen re-injects that noise."""

    capacity: int = 512
    admit_purity: float = 1.0
    replay_fraction: float = 0.25
    admit_min_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise DomainError("pool capacity must be positive")
        if not 0.5 < self.admit_purity <= 1.0:
            raise DomainError(f"admit_purity must lie in (0.5, 1.0], got {self.admit_purity}")
        if not 0.0 <= self.replay_fraction < 1.0:
            raise DomainError("replay_fraction must lie in [0, 1)")
        if self.admit_min_size < 1:
            raise DomainError("admit_min_size must be positive")


class ReplayPool:
    """Capacity-bounded FIFO store of empirical balls with purity-gated admission."""

    def __init__(self, cfg: ReplayConfig):
        self.cfg = cfg
        self._balls: list[EmpiricalBall] = []
        self._rng = np.random.default_rng(cfg.seed)

    def __len__(self) -> int:
        return len(self._balls)

    @property
    def balls(self) -> tuple[EmpiricalBall, ...]:
        return tuple(self._balls)

    def admit(self, balls: Sequence[GranularBall], step: int) -> int:
        """Append balls whose purity clears the threshold; evict oldest past capacity.

        Ball members must already be dataset-level indices. Returns the
        number admitted.
        """
        admitted = 0
        for ball in balls:
            if ball.purity >= self.cfg.admit_purity and ball.size >= self.cfg.admit_min_size:
                self._balls.append(EmpiricalBall(
                    members=ball.members,
                    label=ball.label,
                    center=ball.center,
                    purity_at_admission=ball.purity,
                    admitted_step=int(step),
                ))
                admitted += 1
        overflow = len(self._balls) - self.cfg.capacity
        if overflow > 0:
            del self._balls[:overflow]  # list order is admission order, oldest first
        return admitted

    def sample_empirical(self, k: int) -> tuple[list[EmpiricalBall], np.ndarray]:
        """Draw min(k, pool size) distinct balls uniformly; also return the
        sorted union of their member indices."""
        k = min(int(k), len(self._balls))
        if k <= 0:
            return [], np.empty(0, dtype=np.int64)
        chosen = self._rng.choice(len(self._balls), size=k, replace=False)
        drawn = [self._balls[i] for i in chosen]
        union = sorted({m for b in drawn for m in b.members})
        return drawn, np.asarray(union, dtype=np.int64)

    def to_json(self) -> str:
        """Serialize pool contents for experiment resume."""
        payload = {
            "schema_version": 1,
            "capacity": self.cfg.capacity,
            "balls": [
                {
                    "members": list(b.members),
                    "label": b.label,
                    "center": b.center.tolist(),
                    "purity_at_admission": b.purity_at_admission,
                    "admitted_step": b.admitted_step,
                }
                for b in self._balls
            ],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, cfg: ReplayConfig) -> "ReplayPool":
        payload = json.loads(text)
        pool = cls(cfg)
        for entry in payload["balls"]:
            pool._balls.append(EmpiricalBall(
                members=tuple(entry["members"]),
                label=int(entry["label"]),
                center=np.asarray(entry["center"], dtype=np.float64),
                purity_at_admission=float(entry["purity_at_admission"]),
                admitted_step=int(entry["admitted_step"]),
            ))
        if len(pool._balls) > cfg.capacity:
            raise DomainError("serialized pool exceeds configured capacity")
        return pool


def refresh_centers(drawn: Sequence[EmpiricalBall],
                    current_features: Mapping[int, np.ndarray]) -> list[EmpiricalBall]:
    """Recompute each ball's center as the mean of its members' current features.

    Membership and label stay frozen at their admission-time values. The
    operation is pure and idempotent for fixed features; shifting every
    feature by a constant shifts each center by the same constant.
    """
    out = []
    for ball in drawn:
        rows = []
        for m in ball.members:
            if m not in current_features:
                raise DomainError(f"no current feature vector for member index {m}")
            rows.append(np.asarray(current_features[m], dtype=np.float64))
        out.append(EmpiricalBall(
            members=ball.members,
            label=ball.label,
            center=np.stack(rows).mean(axis=0),
            purity_at_admission=ball.purity_at_admission,
            admitted_step=ball.admitted_step,
        ))
    return out
