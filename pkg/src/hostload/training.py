"""Mini-batch truncated-BPTT training with clipping, annealing, dropout and early stopping."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bilstm import BiLstmModel, forward, model_backward
from .nn import DivergenceError, SgdConfig, clip_global_norm, global_norm, sgd_step

log = logging.getLogger(__name__)

LOG_HEADER = "epoch,train_loss,val_loss,lr,elapsed_s"


@dataclass(frozen=True)
class TrainConfig:
    input_window: int = 64
    hidden_size: int = 128
    fc_size: int | None = None
    batch_size: int = 128
    max_epochs: int = 90
    learning_rate: float = 0.01
    momentum: float = 0.9
    anneal_factor: float = 0.1
    anneal_every: int = 30
    clip_norm: float = 5.0
    truncated_length: int | None = 36
    dropout_rate: float = 0.01
    early_stop_patience: int = 10
    rng_seed: int = 0
    fusion: str = "concat"

    def __post_init__(self):
        for name in ("input_window", "hidden_size", "batch_size", "max_epochs", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.fc_size is not None and self.fc_size < 1:
            raise ValueError("fc_size must be >= 1")
        if self.truncated_length is not None and self.truncated_length < 1:
            raise ValueError("truncated_length must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        self.sgd  # validates learning rate, momentum and annealing

    @classmethod
    def for_task(cls, task, **overrides) -> "TrainConfig":
        """Defaults for a task: mean-load (esp) uses window 24 / truncation 39,
        actual-load uses window 64 / truncation 36."""
        if task.kind == "esp":
            base = dict(input_window=24, truncated_length=39)
        else:
            base = dict(input_window=64, truncated_length=36)
        base.update(overrides)
        return cls(**base)

    @property
    def sgd(self) -> SgdConfig:
        return SgdConfig(self.learning_rate, self.anneal_factor, self.anneal_every, self.momentum)

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    elapsed: float

    def line(self) -> str:
        return f"{self.epoch},{self.train_loss!r},{self.val_loss!r},{self.lr!r},{self.elapsed:.3f}"


@dataclass
class TrainState:
    epoch: int = 0
    lr: float = 0.0
    best_val: float = float("inf")
    best_epoch: int = -1
    since_improvement: int = 0
    stopped_early: bool = False
    history: list[EpochRecord] = field(default_factory=list)
    update_norms: list[tuple[float, float]] = field(default_factory=list)  # (pre-clip, post-clip)

    @property
    def train_losses(self) -> list[float]:
        return [r.train_loss for r in self.history]

    @property
    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.history]

    @property
    def lrs(self) -> list[float]:
        return [r.lr for r in self.history]


def truncated_bptt_segments(length: int, truncated_length: int | None) -> list[range]:
    """Ranges over which gradients flow uninterrupted."""
    if truncated_length is None or truncated_length >= length:
        return [range(0, length)]
    if truncated_length < 1:
        raise ValueError("truncated_length must be >= 1")
    return [range(a, min(a + truncated_length, length)) for a in range(0, length, truncated_length)]


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``rate``, survivors scaled by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def apply_dropout(activations, rate: float, rng: np.random.Generator | None = None,
                  training: bool = True) -> np.ndarray:
    activations = np.asarray(activations, dtype=np.float64)
    if not training or rate == 0.0:
        return activations
    if rng is None:
        raise ValueError("training-mode dropout needs a seeded generator")
    return activations * dropout_mask(activations.shape, rate, rng)


def anneal(state: TrainState, config: TrainConfig) -> float:
    """Learning rate for ``state.epoch`` (0-based): multiplied by the factor every ``anneal_every`` epochs."""
    return config.learning_rate * config.anneal_factor ** (state.epoch // config.anneal_every)


def mse_loss(y_hat, y):
    diff = y_hat - y
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def loss_and_grads(model: BiLstmModel, x, y, truncation=None, mask=None):
    y_hat, cache = forward(model, x, dropout_mask=mask)
    loss, d_y = mse_loss(y_hat, np.asarray(y, dtype=np.float64).reshape(y_hat.shape))
    return loss, model_backward(model, cache, d_y, truncation)


def evaluate_loss(model: BiLstmModel, x, y, chunk: int = 2048) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    total = 0.0
    for a in range(0, len(x), chunk):
        y_hat, _ = forward(model, x[a:a + chunk])
        total += float(np.sum((y_hat - y[a:a + chunk].reshape(y_hat.shape)) ** 2))
    return total / y.size


def train(model: BiLstmModel, train_data, val_data, config: TrainConfig, log_stream=None):
    """Fit ``model`` and return ``(best_model, state)``.

    ``train_data`` and ``val_data`` are ``(histories, targets)`` pairs in
    standardized units. The returned model is the snapshot with the lowest
    validation loss. ``log_stream``, if given, receives one CSV line per epoch.
    """
    x_tr, y_tr = (np.asarray(a, dtype=np.float64) for a in train_data)
    x_va, y_va = (np.asarray(a, dtype=np.float64) for a in val_data)
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if len(x_tr) != len(y_tr) or len(x_va) != len(y_va):
        raise ValueError("histories and targets differ in count")
    rng = np.random.default_rng(config.rng_seed)
    sgd = config.sgd
    state = TrainState(lr=config.learning_rate)
    best = model.copy()
    params = model.parameters()
    velocity = None
    started = time.perf_counter()
    if log_stream is not None:
        log_stream.write(LOG_HEADER + "\n")

    for epoch in range(config.max_epochs):
        state.epoch = epoch
        state.lr = anneal(state, config)
        order = rng.permutation(len(x_tr))
        seen = 0
        running = 0.0
        for a in range(0, len(order), config.batch_size):
            idx = order[a:a + config.batch_size]
            mask = None
            if config.dropout_rate > 0:
                mask = dropout_mask((len(idx), model.fc_size), config.dropout_rate, rng)
            loss, grads = loss_and_grads(model, x_tr[idx], y_tr[idx], config.truncated_length, mask)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}, batch {a // config.batch_size}")
            pre = global_norm(grads)
            grads = clip_global_norm(grads, config.clip_norm)
            state.update_norms.append((pre, global_norm(grads)))
            params, velocity = sgd_step(params, grads, sgd, velocity, learning_rate=state.lr)
            model = model.with_parameters(params)
            running += loss * len(idx)
            seen += len(idx)
        train_loss = running / seen
        val_loss = evaluate_loss(model, x_va, y_va)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        record = EpochRecord(epoch, train_loss, val_loss, state.lr, time.perf_counter() - started)
        state.history.append(record)
        if log_stream is not None:
            log_stream.write(record.line() + "\n")
        log.debug("epoch %d train %.6g val %.6g lr %g", epoch, train_loss, val_loss, state.lr)
        if val_loss < state.best_val:
            state.best_val = val_loss
            state.best_epoch = epoch
            state.since_improvement = 0
            best = model.copy()
        else:
            state.since_improvement += 1
            if state.since_improvement >= config.early_stop_patience:
                state.stopped_early = True
                break
    return best, state
