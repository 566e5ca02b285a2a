"""Desk-scale trainer: a small tanh feature extractor plus a softmax
classifier, trained with momentum SGD either on per-sample labels
("individual" mode) or on granular-ball labels with experience replay
("gbc" mode).

The two modes share every numerical code path. Individual mode is exactly
the degenerate case where each batch row is its own ball, so a gbc run
whose partitions all come out as singletons reproduces the individual-mode
metrics stream bit for bit under the same seed.

Checkpoint format (little-endian): magic ``GBCK``, u32 version (1), u32
d_in, u32 hidden, u32 feature_dim, u32 n_classes, then the six parameter
arrays w1, b1, w2, b2, wc, bc as row-major float64.
"""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .ballgen import SplitConfig, generate_from_arrays
from .core import DomainError, GranularBall, NumericalError
from .layer import BACKWARD_MODES, route_gradients
from .replay import ReplayConfig, ReplayPool, refresh_centers
from .seeding import derive_seed, stream

MODES = ("individual", "gbc")
WEIGHTINGS = ("per_ball", "size_weighted")

_MAGIC = b"GBCK"
_VERSION = 1


@dataclass(eq=False)
class ModelParams:
    """Weights of the extractor (w1/b1, w2/b2) and classifier (wc/bc)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wc: np.ndarray
    bc: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.wc, self.bc]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1], self.wc.shape[1]

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> "ModelParams":
        return ModelParams(*[a.copy() for a in self.arrays()])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, flat: np.ndarray) -> "ModelParams":
        """Rebuild params from a flat vector (same shapes as self)."""
        out = []
        offset = 0
        for a in self.arrays():
            out.append(flat[offset:offset + a.size].reshape(a.shape).copy())
            offset += a.size
        if offset != flat.size:
            raise DomainError("flat vector length does not match parameter count")
        return ModelParams(*out)


def init_params(d_in: int, hidden: int, feature_dim: int, n_classes: int,
                rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    def glorot(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return ModelParams(
        w1=glorot(d_in, hidden), b1=np.zeros(hidden),
        w2=glorot(hidden, feature_dim), b2=np.zeros(feature_dim),
        wc=glorot(feature_dim, n_classes), bc=np.zeros(n_classes),
    )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    decay_points: tuple[float, ...] = (0.5, 0.75)
    decay_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 256
    steps: int = 1000
    seed: int = 0
    mode: str = "gbc"
    backward_mode: str = "mean_scaled"
    loss_weighting: str = "per_ball"
    hidden: int = 32
    feature_dim: int = 16

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        if self.backward_mode not in BACKWARD_MODES:
            raise DomainError(f"backward_mode must be one of {BACKWARD_MODES}")
        if self.loss_weighting not in WEIGHTINGS:
            raise DomainError(f"loss_weighting must be one of {WEIGHTINGS}")
        if self.mode == "gbc" and self.batch_size < 2:
            raise DomainError("gbc mode needs batch_size >= 2")
        if self.batch_size < 1 or self.steps < 1 or self.hidden < 1 or self.feature_dim < 1:
            raise DomainError("batch_size, steps, hidden, feature_dim must be positive")
        if self.learning_rate < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise DomainError("learning_rate, momentum, weight_decay must be non-negative")


def lr_at(cfg: TrainConfig, step: int) -> float:
    """Step-decay schedule: multiply by decay_factor at each decay point."""
    lr = cfg.learning_rate
    for frac in cfg.decay_points:
        if step >= int(frac * cfg.steps):
            lr *= cfg.decay_factor
    return lr


def extractor_forward(params: ModelParams, x: np.ndarray):
    z1 = x @ params.w1 + params.b1
    a1 = np.tanh(z1)
    feats = a1 @ params.w2 + params.b2
    return feats, (x, a1)


def extractor_backward(params: ModelParams, cache, d_feats: np.ndarray):
    x, a1 = cache
    dw2 = a1.T @ d_feats
    db2 = d_feats.sum(axis=0)
    da1 = d_feats @ params.w2.T
    dz1 = da1 * (1.0 - a1 * a1)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    return dw1, db1, dw2, db2


def classifier_forward(params: ModelParams, feats: np.ndarray) -> np.ndarray:
    return feats @ params.wc + params.bc


def predict_logits(params: ModelParams, x: np.ndarray) -> np.ndarray:
    feats, _ = extractor_forward(params, np.asarray(x, dtype=np.float64))
    return classifier_forward(params, feats)


def loss_and_grads(ball_logits: np.ndarray, ball_labels: Sequence[int],
                   weighting: str = "per_ball",
                   ball_sizes: Optional[Sequence[int]] = None):
    """Weighted softmax cross-entropy over balls; returns (loss, d_logits).

    ``per_ball`` gives each ball weight 1/m; ``size_weighted`` weights each
    ball by its member count over the total member count.
    """
    logits = np.asarray(ball_logits, dtype=np.float64)
    labels = np.asarray(ball_labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DomainError("logits must be [m, C] with one label per row")
    m, n_classes = logits.shape
    if labels.min() < 0 or labels.max() >= n_classes:
        raise DomainError(f"ball labels must lie in [0, {n_classes})")
    if weighting not in WEIGHTINGS:
        raise DomainError(f"weighting must be one of {WEIGHTINGS}")
    if weighting == "size_weighted":
        if ball_sizes is None:
            raise DomainError("size_weighted loss needs ball_sizes")
        sizes = np.asarray(ball_sizes, dtype=np.float64)
        weights = sizes / sizes.sum()
    else:
        weights = np.full(m, 1.0 / m)

    with np.errstate(invalid="ignore"):  # non-finite logits surface via the loss
        shifted = logits - logits.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(shifted).sum(axis=1))
        logp = shifted - logsumexp[:, None]
        rows = np.arange(m)
        loss = float((weights * -logp[rows, labels]).sum())
        d_logits = np.exp(logp)
        d_logits[rows, labels] -= 1.0
        d_logits *= weights[:, None]
    return loss, d_logits


@dataclass(eq=False)
class TrainState:
    params: ModelParams
    velocity: list[np.ndarray]
    step: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "TrainState":
        return cls(params=params, velocity=[np.zeros_like(a) for a in params.arrays()])


def sgd_update(state: TrainState, grads: Sequence[np.ndarray], lr: float,
               cfg: TrainConfig) -> None:
    """Heavy-ball momentum with L2 weight decay folded into the gradient."""
    for p, v, g in zip(state.params.arrays(), state.velocity, grads):
        v *= cfg.momentum
        v += g + cfg.weight_decay * p
        p -= lr * v


@dataclass(eq=False)
class Batch:
    """One assembled training batch; empirical rows come first."""

    indices: np.ndarray
    x: np.ndarray
    y: np.ndarray
    clean: Optional[np.ndarray]
    n_empirical: int
    empirical_balls: list


def assemble_batch(features: np.ndarray, labels: np.ndarray, clean: Optional[np.ndarray],
                   pool: ReplayPool, train_cfg: TrainConfig, replay_cfg: ReplayConfig,
                   rng: np.random.Generator) -> Batch:
    """Draw one batch: replayed empirical samples first, then a fresh draw.

    Empirical balls are taken as a uniformly permuted prefix of the pool
    whose member union stays within ``replay_fraction`` of the batch (and
    always leaves room for at least one fresh sample). Fresh samples are
    drawn uniformly without replacement from the whole training set and any
    that duplicate an empirical sample are dropped, so no sample carries
    double gradient weight in one step.
    """
    n = features.shape[0]
    b = min(train_cfg.batch_size, n)
    emp_balls: list = []
    union: set[int] = set()
    if train_cfg.mode == "gbc" and replay_cfg.replay_fraction > 0 and len(pool) > 0:
        target = int(replay_cfg.replay_fraction * b)
        if target > 0:
            drawn, _ = pool.sample_empirical(len(pool))
            for ball in drawn:
                if len(union) >= target:
                    break
                candidate = union | set(ball.members)
                if len(candidate) > b - 1:
                    break
                emp_balls.append(ball)
                union = candidate
    emp_ids = np.asarray(sorted(union), dtype=np.int64)
    fresh = rng.choice(n, size=b - emp_ids.size, replace=False).astype(np.int64)
    if emp_ids.size:
        fresh = fresh[~np.isin(fresh, emp_ids)]
    indices = np.concatenate([emp_ids, fresh])
    return Batch(
        indices=indices,
        x=features[indices],
        y=labels[indices],
        clean=None if clean is None else clean[indices],
        n_empirical=emp_ids.size,
        empirical_balls=emp_balls,
    )


def train_step(batch: Batch, state: TrainState, pool: ReplayPool,
               train_cfg: TrainConfig, split_cfg: SplitConfig) -> dict:
    """One optimization step; mutates ``state`` (and the pool in gbc mode).

    Returns the per-step metrics record.
    """
    b = batch.x.shape[0]
    lr = lr_at(train_cfg, state.step)
    feats, cache = extractor_forward(state.params, batch.x)

    if train_cfg.mode == "individual":
        ball_rows: list[np.ndarray] = []
        ball_labels = batch.y
        ball_sizes = np.ones(b, dtype=np.int64)
        centers = feats
        n_balls = b
    else:
        id_to_row = {int(idx): r for r, idx in enumerate(batch.indices)}
        current = {m: feats[id_to_row[m]] for ball in batch.empirical_balls
                   for m in ball.members}
        refreshed = refresh_centers(batch.empirical_balls, current)
        emp_rows = [np.asarray([id_to_row[m] for m in ball.members], dtype=np.int64)
                    for ball in refreshed]

        fresh_rows = np.arange(batch.n_empirical, b, dtype=np.int64)
        part = generate_from_arrays(
            feats[fresh_rows], batch.y[fresh_rows],
            dataclasses.replace(split_cfg,
                                seed=derive_seed(split_cfg.seed, "step", state.step)),
            ids=fresh_rows)
        pool.admit(
            [GranularBall(members=tuple(int(batch.indices[r]) for r in ball.members),
                          center=ball.center, label=ball.label, purity=ball.purity)
             for ball in part.balls],
            state.step)

        ball_rows = emp_rows + [np.asarray(bl.members, dtype=np.int64) for bl in part.balls]
        ball_labels = np.asarray([bl.label for bl in refreshed]
                                 + [bl.label for bl in part.balls], dtype=np.int64)
        ball_sizes = np.asarray([r.size for r in ball_rows], dtype=np.int64)
        centers = np.concatenate([
            np.stack([bl.center for bl in refreshed]) if refreshed else
            np.empty((0, feats.shape[1])),
            np.stack([bl.center for bl in part.balls]),
        ])
        n_balls = len(ball_rows)

    logits = classifier_forward(state.params, centers)
    loss, d_logits = loss_and_grads(logits, ball_labels, train_cfg.loss_weighting,
                                    ball_sizes)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss!r} at step {state.step}")

    dwc = centers.T @ d_logits
    dbc = d_logits.sum(axis=0)
    d_centers = d_logits @ state.params.wc.T
    if train_cfg.mode == "individual":
        d_feats = d_centers
    else:
        d_feats = route_gradients(d_centers, ball_rows, b, train_cfg.backward_mode)
    dw1, db1, dw2, db2 = extractor_backward(state.params, cache, d_feats)
    sgd_update(state, [dw1, db1, dw2, db2, dwc, dbc], lr, train_cfg)

    if batch.clean is not None:
        before_count = int((batch.y != batch.clean).sum())
        if train_cfg.mode == "individual":
            after_count, member_total = before_count, b
        else:
            after_count = sum(int((batch.clean[rows] != int(lbl)).sum())
                              for rows, lbl in zip(ball_rows, ball_labels))
            member_total = int(ball_sizes.sum())
        noise_before = before_count / b
        noise_after = after_count / member_total
    else:
        noise_before = noise_after = None

    metrics = {
        "step": state.step,
        "loss": loss,
        "lr": lr,
        "batch_size": b,
        "ball_count": n_balls,
        "mean_ball_size": (float(ball_sizes.sum()) / n_balls),
        "empirical_balls": len(batch.empirical_balls),
        "noise_before": noise_before,
        "noise_after": noise_after,
    }
    state.step += 1
    return metrics


def train(features: np.ndarray, labels: np.ndarray, clean: Optional[np.ndarray],
          train_cfg: TrainConfig, split_cfg: SplitConfig, replay_cfg: ReplayConfig,
          n_classes: Optional[int] = None,
          metrics_sink: Optional[Callable[[dict], None]] = None):
    """Run the full training loop; returns (state, pool, metrics list).

    Sample ids are row positions: ``features[i]`` is sample i. Batching,
    parameter init, and ball generation draw from independent named
    sub-streams of ``train_cfg.seed``, so runs are reproducible and the
    batch sequence does not depend on the mode.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise DomainError("features must be [N, d] aligned with labels")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    params = init_params(features.shape[1], train_cfg.hidden, train_cfg.feature_dim,
                         n_classes, stream(train_cfg.seed, "init"))
    state = TrainState.fresh(params)
    pool = ReplayPool(replay_cfg)
    batch_rng = stream(train_cfg.seed, "batch")
    history = []
    for _ in range(train_cfg.steps):
        batch = assemble_batch(features, labels, clean, pool, train_cfg, replay_cfg,
                               batch_rng)
        metrics = train_step(batch, state, pool, train_cfg, split_cfg)
        history.append(metrics)
        if metrics_sink is not None:
            metrics_sink(metrics)
    return state, pool, history


def evaluate(params: ModelParams, features: np.ndarray, labels: Sequence[int]) -> float:
    """Per-sample accuracy; no ball generation at inference time."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise DomainError("evaluate needs a non-empty test set")
    if labels.shape != (features.shape[0],):
        raise DomainError("test labels are not aligned with features")
    preds = predict_logits(params, features).argmax(axis=1)
    return float(np.mean(preds == labels))


def gbc_loss_and_param_grads(params: ModelParams, x: np.ndarray,
                             ball_rows: Sequence[np.ndarray], ball_labels: Sequence[int],
                             weighting: str = "per_ball",
                             backward_mode: str = "mean_scaled"):
    """Loss and full parameter gradient for a frozen ball structure.

    This is the differentiable composition the training step evaluates
    (weight decay excluded); exposed so the gradient can be checked against
    finite differences without re-running the clustering.
    """
    feats, cache = extractor_forward(params, np.asarray(x, dtype=np.float64))
    rows = [np.asarray(r, dtype=np.int64) for r in ball_rows]
    centers = np.stack([feats[r].mean(axis=0) for r in rows])
    sizes = np.asarray([r.size for r in rows], dtype=np.int64)
    logits = classifier_forward(params, centers)
    loss, d_logits = loss_and_grads(logits, ball_labels, weighting, sizes)
    dwc = centers.T @ d_logits
    dbc = d_logits.sum(axis=0)
    d_centers = d_logits @ params.wc.T
    d_feats = route_gradients(d_centers, rows, x.shape[0], backward_mode)
    dw1, db1, dw2, db2 = extractor_backward(params, cache, d_feats)
    return loss, ModelParams(dw1, db1, dw2, db2, dwc, dbc)


def save_params(path, params: ModelParams) -> None:
    """Write the documented GBCK binary checkpoint."""
    d_in, hidden, d_feat, n_classes = params.dims
    header = _MAGIC + struct.pack("<5I", _VERSION, d_in, hidden, d_feat, n_classes)
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                       for a in params.arrays())
    with open(path, "wb") as fh:
        fh.write(header + payload)


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise DomainError("not a GBCK checkpoint (bad magic bytes)")
    version, d_in, hidden, d_feat, n_classes = struct.unpack("<5I", blob[4:24])
    if version != _VERSION:
        raise DomainError(f"unsupported checkpoint version {version}")
    shapes = [(d_in, hidden), (hidden,), (hidden, d_feat), (d_feat,),
              (d_feat, n_classes), (n_classes,)]
    expected = 24 + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(blob) != expected:
        raise DomainError(f"checkpoint is {len(blob)} bytes, expected {expected}")
    offset = 24
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(blob, dtype="<f8", count=count,
                                    offset=offset).reshape(shape).astype(np.float64))
        offset += 8 * count
    return ModelParams(*arrays)
