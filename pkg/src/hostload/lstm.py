"""LSTM cell and sequence passes, with exact backpropagation through time.

All functions accept either a single example (vectors of shape ``(n,)``) or a
batch (arrays of shape ``(batch, n)``); gradients are summed over the batch.

Gate pre-activations are one affine map of the concatenation ``[h_prev; x]``::

    i = sigmoid(W_i [h; x] + b_i)      f = sigmoid(W_f [h; x] + b_f)
    o = sigmoid(W_o [h; x] + b_o)      c_hat = tanh(W_c [h; x] + b_c)
    c = f * c_prev + i * c_hat         h = o * tanh(c)
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .nn import ShapeError, sigmoid, xavier_init

GATES = ("i", "f", "o", "c")


@dataclass
class LstmParams:
    w_i: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        shape = np.shape(self.w_i)
        if len(shape) != 2 or shape[1] <= shape[0]:
            raise ShapeError(f"gate weights must be hidden x (hidden + input), got {shape}")
        for g in GATES:
            w = getattr(self, "w_" + g)
            b = getattr(self, "b_" + g)
            if np.shape(w) != shape:
                raise ShapeError(f"w_{g} has shape {np.shape(w)}, expected {shape}")
            if np.shape(b) != (shape[0],):
                raise ShapeError(f"b_{g} has shape {np.shape(b)}, expected ({shape[0]},)")

    @property
    def hidden_size(self) -> int:
        return self.w_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_i.shape[1] - self.w_i.shape[0]

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng) -> "LstmParams":
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        ws = {f"w_{g}": xavier_init(hidden_size, hidden_size + input_size, rng) for g in GATES}
        bs = {f"b_{g}": np.zeros(hidden_size) for g in GATES}
        return cls(**ws, **bs)

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmParams":
        return cls(**{f"w_{g}": np.zeros((hidden_size, hidden_size + input_size)) for g in GATES},
                   **{f"b_{g}": np.zeros(hidden_size) for g in GATES})

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """Gate weights stacked as ``(4*hidden, hidden+input)`` in i, f, o, c order."""
        w = np.concatenate([self.w_i, self.w_f, self.w_o, self.w_c], axis=0)
        b = np.concatenate([self.b_i, self.b_f, self.b_o, self.b_c])
        return w, b


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int, batch: int | None = None) -> "LstmState":
        shape = (hidden_size,) if batch is None else (batch, hidden_size)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class LstmStep:
    """Activations of one forward step, kept for the backward pass."""
    x: np.ndarray
    z: np.ndarray  # [h_prev; x]
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    c_hat: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


@dataclass
class LstmCache:
    """Per-step activations of a sequence pass, stacked along a leading time axis.

    ``len(cache)`` is the number of steps and ``cache[t]`` returns that step as
    an :class:`LstmStep`. Arrays are ``(steps, batch, n)``; ``squeeze`` records
    that the caller passed unbatched vectors.
    """
    x: np.ndarray
    h_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    c_hat: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray
    squeeze: bool = False

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, t) -> LstmStep:
        pick = (lambda a: a[t, 0]) if self.squeeze else (lambda a: a[t])
        z = np.concatenate([self.h_prev[t], self.x[t]], axis=-1)
        return LstmStep(pick(self.x), z[0] if self.squeeze else z, pick(self.i), pick(self.f),
                        pick(self.o), pick(self.c_hat), pick(self.c_prev), pick(self.c),
                        pick(self.tanh_c), pick(self.h))


def _step(w, b, hidden, x, prev: LstmState):
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(prev.h, dtype=np.float64)
    c_prev = np.asarray(prev.c, dtype=np.float64)
    if x.shape[-1] != w.shape[1] - hidden:
        raise ShapeError(f"input has {x.shape[-1]} features, cell expects {w.shape[1] - hidden}")
    if h_prev.shape[-1] != hidden or c_prev.shape != h_prev.shape:
        raise ShapeError(f"state shapes {h_prev.shape}/{c_prev.shape} do not match hidden size {hidden}")
    if h_prev.shape[:-1] != x.shape[:-1]:
        raise ShapeError(f"batch shapes differ: state {h_prev.shape}, input {x.shape}")
    z = np.concatenate([h_prev, x], axis=-1)
    a = z @ w.T + b
    gates = sigmoid(a[..., :3 * hidden])
    i = gates[..., :hidden]
    f = gates[..., hidden:2 * hidden]
    o = gates[..., 2 * hidden:]
    c_hat = np.tanh(a[..., 3 * hidden:])
    c = f * c_prev + i * c_hat
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return LstmState(h, c), LstmStep(x, z, i, f, o, c_hat, c_prev, c, tanh_c, h)


def lstm_cell_forward(params: LstmParams, x, prev: LstmState):
    """Advance one step; returns ``(new_state, cache_entry)``."""
    w, b = params.stacked()
    return _step(w, b, params.hidden_size, x, prev)


def lstm_sequence_forward(params: LstmParams, inputs, init: LstmState | None = None):
    """Run the cell over ``inputs`` in order.

    ``inputs`` is a sequence of per-step inputs (or an array whose first axis is
    time), each ``(input,)`` or ``(batch, input)``. Returns
    ``(hidden_states, cache)``.
    """
    if len(inputs) == 0:
        raise ValueError("empty input sequence")
    try:
        xs = np.asarray(inputs, dtype=np.float64)
    except ValueError as exc:
        raise ShapeError("non-uniform input shapes") from exc
    if xs.dtype == object or xs.ndim not in (2, 3):
        raise ShapeError("non-uniform input shapes")
    squeeze = xs.ndim == 2
    if squeeze:
        xs = xs[:, None, :]
    T, B, _ = xs.shape
    H = params.hidden_size
    if xs.shape[2] != params.input_size:
        raise ShapeError(f"input has {xs.shape[2]} features, cell expects {params.input_size}")
    w, b = params.stacked()
    if init is None:
        h, c = np.zeros((B, H)), np.zeros((B, H))
    else:
        h = np.asarray(init.h, dtype=np.float64).reshape(B, H)
        c = np.asarray(init.c, dtype=np.float64).reshape(B, H)
    xproj = xs @ w[:, H:].T + b          # (T, B, 4H), input part of every step at once
    w_h = np.ascontiguousarray(w[:, :H].T)
    cache = LstmCache(xs, *(np.empty((T, B, H)) for _ in range(9)), squeeze=squeeze)
    for t in range(T):
        cache.h_prev[t] = h
        cache.c_prev[t] = c
        a = xproj[t] + h @ w_h
        gates = sigmoid(a[:, :3 * H])
        i, f, o = gates[:, :H], gates[:, H:2 * H], gates[:, 2 * H:]
        c_hat = np.tanh(a[:, 3 * H:])
        c = f * c + i * c_hat
        tanh_c = np.tanh(c)
        h = o * tanh_c
        cache.i[t], cache.f[t], cache.o[t] = i, f, o
        cache.c_hat[t], cache.c[t], cache.tanh_c[t], cache.h[t] = c_hat, c, tanh_c, h
    hs = [cache.h[t, 0] for t in range(T)] if squeeze else list(cache.h)
    return hs, cache


def lstm_sequence_backward(params: LstmParams, cache: LstmCache, dh_per_step, truncation: int | None = None):
    """Backpropagate through a cached forward pass.

    Parameters
    ----------
    params : LstmParams
        The parameters used for the forward pass.
    cache : LstmCache
        Output of :func:`lstm_sequence_forward`.
    dh_per_step : sequence of arrays
        Gradient of the loss with respect to each step's hidden output.
    truncation : int, optional
        Truncated-BPTT length. Gradient flow through ``h`` and ``c`` is cut at
        step indices that are multiples of ``truncation``; ``None`` means full BPTT.

    Returns
    -------
    grads : LstmParams
        Parameter gradients, summed over steps and batch.
    dxs : list of arrays
        Gradient with respect to each step's input.
    """
    T = len(cache)
    if len(dh_per_step) != T:
        raise ShapeError(f"{len(dh_per_step)} upstream gradients for {T} cached steps")
    if truncation is not None and truncation < 1:
        raise ValueError("truncation must be >= 1")
    dh_all = np.asarray(dh_per_step, dtype=np.float64)
    if cache.squeeze:
        dh_all = dh_all[:, None, :] if dh_all.ndim == 2 else dh_all
    if dh_all.shape != cache.h.shape:
        raise ShapeError(f"upstream gradients have shape {dh_all.shape}, expected {cache.h.shape}")
    H = params.hidden_size
    w, _ = params.stacked()
    w_h = np.ascontiguousarray(w[:, :H])
    da_all = np.empty(cache.h.shape[:2] + (4 * H,))
    dh_next = np.zeros(cache.h.shape[1:])
    dc_next = np.zeros(cache.h.shape[1:])
    for t in range(T - 1, -1, -1):
        i, f, o, c_hat, tanh_c = cache.i[t], cache.f[t], cache.o[t], cache.c_hat[t], cache.tanh_c[t]
        dh = dh_all[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
        da = da_all[t]
        da[:, :H] = dc * c_hat * i * (1.0 - i)
        da[:, H:2 * H] = dc * cache.c_prev[t] * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dh * tanh_c * o * (1.0 - o)
        da[:, 3 * H:] = dc * i * (1.0 - c_hat * c_hat)
        if truncation is not None and t % truncation == 0:
            dh_next = np.zeros_like(dh_next)
            dc_next = np.zeros_like(dc_next)
        else:
            dh_next = da @ w_h
            dc_next = dc * f
    flat_da = da_all.reshape(-1, 4 * H)
    z = np.concatenate([cache.h_prev, cache.x], axis=-1).reshape(flat_da.shape[0], -1)
    dw = flat_da.T @ z
    db = flat_da.sum(axis=0)
    dx = da_all @ w[:, H:]
    dxs = [dx[t, 0] for t in range(T)] if cache.squeeze else list(dx)
    grads = LstmParams(**{f"w_{g}": p for g, p in zip(GATES, np.split(dw, 4, axis=0))},
                       **{f"b_{g}": p for g, p in zip(GATES, np.split(db, 4))})
    return grads, dxs


@dataclass
class RnnParams:
    u: np.ndarray    # hidden x input
    w: np.ndarray    # hidden x hidden
    b_h: np.ndarray
    v: np.ndarray    # output x hidden
    b_y: np.ndarray

    def __post_init__(self):
        hidden = np.shape(self.w)[0]
        if (np.shape(self.w) != (hidden, hidden) or np.shape(self.u)[0] != hidden
                or np.shape(self.b_h) != (hidden,) or np.shape(self.v)[1] != hidden
                or np.shape(self.b_y) != (np.shape(self.v)[0],)):
            raise ShapeError("inconsistent RNN parameter shapes")


def rnn_cell_forward(params: RnnParams, x, h_prev):
    """Plain tanh RNN step: ``h = tanh(U x + W h_prev + b_h)``, ``y = V h + b_y``."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x.shape[-1] != params.u.shape[1] or h_prev.shape[-1] != params.w.shape[0]:
        raise ShapeError("input or hidden state does not match RNN parameters")
    h = np.tanh(x @ params.u.T + h_prev @ params.w.T + params.b_h)
    y = h @ params.v.T + params.b_y
    return h, y
