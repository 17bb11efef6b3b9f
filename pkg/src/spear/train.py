"""Prompt-tuning loop: loss, gradients, AdamW, linear schedule and epoch logging."""
from __future__ import annotations

import enum
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from spear import metrics as M
from spear.errors import ConfigError, DataError, NumericError
from spear.model import SpearModel, backward as model_backward, forward

log = logging.getLogger(__name__)

BCE_EPS = 1e-7
CHUNK = 8  # examples per worker task; fixed so results do not depend on thread count


class TrainableSet(str, enum.Enum):
    PromptsOnly = "PromptsOnly"
    PromptsAndHead = "PromptsAndHead"


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: str = "linear"
    trainable_set: str = TrainableSet.PromptsAndHead.value
    loss_mode: str = "window"  # "window": BCE on the aggregated score; "position": mean per-position BCE
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"train.learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError("train.weight_decay must be >= 0")
        if self.schedule not in ("linear", "constant"):
            raise ConfigError(f"train.schedule must be 'linear' or 'constant', got {self.schedule!r}")
        TrainableSet(self.trainable_set)
        if self.loss_mode not in ("window", "position"):
            raise ConfigError(f"train.loss_mode must be 'window' or 'position', got {self.loss_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def trainable_names(model: SpearModel, config: TrainConfig) -> tuple[str, ...]:
    names = ["prompts"]
    if config.trainable_set == TrainableSet.PromptsAndHead.value:
        names += ["head_w", "head_b"]
    if model.config.train_embeddings:
        names.append("embedding")
    return tuple(names)


@dataclass
class TrainState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    history: list = field(default_factory=list)


# -- loss -------------------------------------------------------------------

def bce_loss(score, label):
    """Binary cross-entropy with the score clamped to [1e-7, 1 - 1e-7]; mean over a batch."""
    s = np.clip(np.asarray(score, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(label, dtype=np.float64)
    return float(np.mean(-(y * np.log(s) + (1.0 - y) * np.log1p(-s))))


def bce_grad(score, label):
    """d(per-example BCE)/d(score), zero where the clamp is active."""
    s = np.asarray(score)
    y = np.asarray(label, dtype=s.dtype)
    inside = (s > BCE_EPS) & (s < 1.0 - BCE_EPS)
    sc = np.clip(s, BCE_EPS, 1.0 - BCE_EPS)
    return np.where(inside, (sc - y) / (sc * (1.0 - sc)), 0.0).astype(s.dtype)


# -- gradients ----------------------------------------------------------------

def _chunk_grads(model, tokens, mask, labels, names, loss_mode, scale):
    scores, probs, cache = forward(model, tokens, mask, keep_cache=True)
    if loss_mode == "window":
        losses = _bce_each(scores, labels)
        grads = model_backward(model, cache, dscores=bce_grad(scores, labels) * scale, trainable=names)
    else:
        n_real = mask.sum(axis=1, keepdims=True)
        yb = np.broadcast_to(labels[:, None], probs.shape)
        per_pos = _bce_each(probs, yb) * mask
        losses = per_pos.sum(axis=1) / n_real[:, 0]
        dprobs = bce_grad(probs, yb) * mask / n_real * scale
        grads = model_backward(model, cache, dprobs=dprobs.astype(probs.dtype), trainable=names)
    return losses, grads


def _bce_each(score, label):
    s = np.clip(np.asarray(score, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(label, dtype=np.float64)
    return -(y * np.log(s) + (1.0 - y) * np.log1p(-s))


def backward(model: SpearModel, tokens, mask, labels, names=("prompts", "head_w", "head_b"),
             loss_mode="window", pool: ThreadPoolExecutor | None = None):
    """Mean batch loss and its exact gradients for the tensors in ``names``.

    The batch is processed in fixed chunks of :data:`CHUNK` examples and the
    chunk gradients are summed in chunk order, so the result is the same for
    any number of worker threads.
    """
    tokens = np.atleast_2d(tokens)
    mask = np.atleast_2d(mask)
    labels = np.asarray(labels).reshape(-1)
    B = len(labels)
    if B == 0:
        raise DataError("empty batch")
    scale = 1.0 / B
    spans = [(i, min(i + CHUNK, B)) for i in range(0, B, CHUNK)]

    def run(span):
        lo, hi = span
        return _chunk_grads(model, tokens[lo:hi], mask[lo:hi], labels[lo:hi], names, loss_mode, scale)

    results = list(pool.map(run, spans)) if pool is not None and len(spans) > 1 else [run(s) for s in spans]
    losses = np.concatenate([r[0] for r in results])
    grads = {}
    for _, g in results:
        for name, val in g.items():
            grads[name] = val.copy() if name not in grads else grads[name] + val
    return float(losses.mean()), grads


# -- optimiser ----------------------------------------------------------------

DECAYED = ("prompts", "head_w", "embedding")


def linear_lr(step: int, total_steps: int, base_lr: float) -> float:
    if total_steps <= 0:
        return base_lr
    return max(0.0, base_lr * (1.0 - step / total_steps))


def adamw_step(params: dict, grads: dict, state: TrainState, lr: float, config: TrainConfig) -> None:
    """One decoupled-weight-decay Adam update, in place.

    Weight decay applies to the prompt matrix and head weight, never to the
    head bias.
    """
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name in sorted(grads):
        g = grads[name]
        p = params[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name} at step {state.step}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if config.weight_decay and name in DECAYED:
            p *= 1.0 - lr * config.weight_decay
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + config.eps)).astype(p.dtype)


# -- loop -----------------------------------------------------------------------

@dataclass
class WindowBatch:
    """Quantized windows as stacked arrays."""

    tokens: np.ndarray
    mask: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    def take(self, idx):
        return WindowBatch(self.tokens[idx], self.mask[idx], self.labels[idx])

    @classmethod
    def from_windows(cls, windows) -> "WindowBatch":
        if not windows:
            return cls(np.zeros((0, 1), np.int64), np.zeros((0, 1), bool), np.zeros(0, np.int64))
        return cls(np.stack([w.tokens for w in windows]), np.stack([w.mask for w in windows]),
                   np.array([w.label for w in windows], dtype=np.int64))


def predict_scores(model: SpearModel, data: WindowBatch, pool=None, batch_size: int = 64) -> np.ndarray:
    spans = [(i, min(i + CHUNK, len(data))) for i in range(0, len(data), CHUNK)]

    def run(span):
        lo, hi = span
        return forward(model, data.tokens[lo:hi], data.mask[lo:hi])[0]

    parts = list(pool.map(run, spans)) if pool is not None else [run(s) for s in spans]
    return np.concatenate(parts).astype(np.float64) if parts else np.zeros(0)


def _params(model: SpearModel, names) -> dict:
    return {n: getattr(model, n) for n in names}


def train(train_data: WindowBatch, val_data: WindowBatch | None, model: SpearModel,
          config: TrainConfig, threads: int = 1, threshold: float = M.DEFAULT_THRESHOLD,
          log_path=None, on_epoch=None) -> TrainState:
    """Train the prompts (and head) in place; returns the state with per-epoch history."""
    if len(train_data) == 0:
        raise DataError("training set is empty")
    names = trainable_names(model, config)
    params = _params(model, names)
    frozen_before = model.frozen_checksum()
    rng = np.random.default_rng([int(config.seed), 0x5F])
    n = len(train_data)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total = steps_per_epoch * config.epochs
    state = TrainState()
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(n)
            losses = []
            lr = config.learning_rate
            for b in range(steps_per_epoch):
                idx = order[b * config.batch_size:(b + 1) * config.batch_size]
                batch = train_data.take(idx)
                loss, grads = backward(model, batch.tokens, batch.mask, batch.labels, names,
                                       config.loss_mode, pool)
                if not math.isfinite(loss):
                    raise NumericError(f"non-finite loss at epoch {epoch}, step {state.step}")
                if config.schedule == "linear":
                    lr = linear_lr(state.step, total, config.learning_rate)
                adamw_step(params, grads, state, lr, config)
                losses.append(loss * len(idx))
            record = {"epoch": epoch, "train_loss": float(np.sum(losses) / n), "lr": lr}
            if val_data is not None and len(val_data):
                scores = predict_scores(model, val_data, pool)
                record["val_metrics"] = M.evaluate(scores, val_data.labels, threshold).to_dict()
            else:
                record["val_metrics"] = {}
            checksum = model.frozen_checksum()
            if checksum != frozen_before:
                raise NumericError(f"frozen parameters changed during epoch {epoch}")
            record["frozen_checksum"] = checksum
            state.history.append(record)
            log.info("epoch %d loss %.4f", epoch, record["train_loss"])
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            if on_epoch:
                on_epoch(record)
    finally:
        if pool is not None:
            pool.shutdown()
        if log_fh:
            log_fh.close()
    return state
