"""Dense numeric kernels shared by the recurrent models.

Matrices and vectors are plain float64 numpy arrays. Parameter groups are
passed around as ordered ``dict[str, ndarray]`` so clipping and the optimizer
do not need to know which network produced them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DivergenceError(ArithmeticError):
    """A loss or gradient became non-finite during training."""


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(x):
    # exp overflow for very negative x gives the correct limit 0
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def sigmoid_prime(y):
    """Derivative of the logistic function expressed through its output ``y``."""
    return y * (1.0 - y)


def tanh_act(x):
    return np.tanh(x)


def tanh_prime(y):
    """Derivative of tanh expressed through its output ``y``."""
    return 1.0 - y * y


def relu(x):
    return np.maximum(x, 0.0)


def relu_prime(x):
    # subgradient at exactly 0 is taken as 0
    return (np.asarray(x) > 0.0).astype(np.float64)


def xavier_init(rows: int, cols: int, rng_seed) -> np.ndarray:
    """Xavier/Glorot uniform matrix of shape ``(rows, cols)``.

    ``rng_seed`` may be an integer seed or an existing ``numpy.random.Generator``
    (the latter lets a model draw several matrices from one stream).
    """
    if rows < 1 or cols < 1:
        raise ShapeError(f"xavier_init needs positive dimensions, got {rows}x{cols}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def global_norm(grads) -> float:
    arrays = grads.values() if isinstance(grads, Mapping) else grads
    return float(np.sqrt(sum(float(np.sum(np.square(g))) for g in arrays)))


def clip_global_norm(grads, max_norm: float):
    """Rescale all gradients together so their joint L2 norm is at most ``max_norm``.

    Accepts either a mapping of name -> array or a sequence of arrays and returns
    the same kind of container. Raises ``DivergenceError`` on non-finite input.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise DivergenceError("non-finite gradient norm; training diverged")
    scale = max_norm / norm if norm > max_norm else 1.0
    if isinstance(grads, Mapping):
        if scale == 1.0:
            return dict(grads)
        return {k: g * scale for k, g in grads.items()}
    if scale == 1.0:
        return [np.asarray(g) for g in grads]
    return [np.asarray(g) * scale for g in grads]


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.01
    anneal_factor: float = 0.1
    anneal_every: int = 30
    momentum: float = 0.9

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.anneal_factor < 1.0:
            raise ValueError("anneal_factor must lie in (0, 1)")
        if self.anneal_every < 1:
            raise ValueError("anneal_every must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
             config: SgdConfig, velocity: Mapping[str, np.ndarray] | None = None,
             learning_rate: float | None = None):
    """One momentum-SGD update.

    ``v <- momentum * v + lr * g`` then ``p <- p - v``. Returns new
    ``(params, velocity)`` dicts; the inputs are left untouched. ``learning_rate``
    overrides ``config.learning_rate`` (the trainer passes the annealed rate).
    """
    lr = config.learning_rate if learning_rate is None else learning_rate
    if velocity is None:
        velocity = {}
    if set(grads) != set(params):
        raise ShapeError("gradient keys do not match parameter keys")
    new_params, new_velocity = {}, {}
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(p):
            raise ShapeError(f"gradient for {name!r} has shape {np.shape(g)}, expected {np.shape(p)}")
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(p, dtype=np.float64)
        elif np.shape(v) != np.shape(p):
            raise ShapeError(f"velocity for {name!r} has shape {np.shape(v)}, expected {np.shape(p)}")
        v = config.momentum * v + lr * g
        new_velocity[name] = v
        new_params[name] = p - v
    return new_params, new_velocity
