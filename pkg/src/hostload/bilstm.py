"""Bidirectional LSTM forecaster: BiLSTM feature extractor, ReLU FC layer, linear head.

The forward LSTM reads the history window in time order, the backward LSTM
reads the same window reversed. At each position ``t`` the two hidden states
are fused (``lambda1 * h_fwd[t]`` and ``lambda2 * h_bwd[t]``, concatenated by
default or summed), the fused sequence is flattened and fed to
``relu(W_fc . H + b_fc)``, and the bias-free head ``W_r`` produces the forecast.

A model with ``bwd=None`` is the unidirectional LSTM baseline with the same head.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .lstm import LstmParams, lstm_sequence_backward, lstm_sequence_forward
from .nn import ShapeError, relu, xavier_init

FUSIONS = ("concat", "sum")


@dataclass
class BiLstmModel:
    fwd: LstmParams
    bwd: LstmParams | None
    w_fc: np.ndarray
    b_fc: np.ndarray
    w_r: np.ndarray
    window: int
    lambda1: float = 1.0
    lambda2: float = 1.0
    fusion: str = "concat"
    scaler: object | None = None   # ingest.Scaler, set once training data is known
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fusion not in FUSIONS:
            raise ValueError(f"unknown fusion mode {self.fusion!r}")
        if self.bwd is not None and (self.bwd.hidden_size != self.fwd.hidden_size
                                     or self.bwd.input_size != self.fwd.input_size):
            raise ShapeError("forward and backward LSTMs must share sizes")
        if self.w_fc.shape != (self.b_fc.shape[0], self.window * self.feature_size):
            raise ShapeError(f"w_fc has shape {self.w_fc.shape}, expected "
                             f"({self.b_fc.shape[0]}, {self.window * self.feature_size})")
        if self.w_r.ndim != 2 or self.w_r.shape[1] != self.fc_size:
            raise ShapeError(f"w_r has shape {self.w_r.shape}, expected (output, {self.fc_size})")

    @property
    def bidirectional(self) -> bool:
        return self.bwd is not None

    @property
    def input_size(self) -> int:
        return self.fwd.input_size

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden_size

    @property
    def fc_size(self) -> int:
        return self.w_fc.shape[0]

    @property
    def output_size(self) -> int:
        return self.w_r.shape[0]

    @property
    def feature_size(self) -> int:
        """Width of the fused per-step feature."""
        if self.bidirectional and self.fusion == "concat":
            return 2 * self.hidden_size
        return self.hidden_size

    @classmethod
    def init(cls, *, input_size=1, hidden_size=128, window=24, output_size=1, fc_size=None,
             seed=0, bidirectional=True, fusion="concat", lambda1=1.0, lambda2=1.0):
        rng = np.random.default_rng(seed)
        fc_size = hidden_size if fc_size is None else fc_size
        fwd = LstmParams.init(input_size, hidden_size, rng)
        bwd = LstmParams.init(input_size, hidden_size, rng) if bidirectional else None
        feat = 2 * hidden_size if bidirectional and fusion == "concat" else hidden_size
        w_fc = xavier_init(fc_size, window * feat, rng)
        w_r = xavier_init(output_size, fc_size, rng)
        return cls(fwd, bwd, w_fc, np.zeros(fc_size), w_r, window,
                   lambda1=lambda1, lambda2=lambda2, fusion=fusion)

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays in declared order. The fusion weights are fixed, not listed."""
        out = {f"fwd.{k}": v for k, v in self.fwd.arrays().items()}
        if self.bwd is not None:
            out.update({f"bwd.{k}": v for k, v in self.bwd.arrays().items()})
        out.update(w_fc=self.w_fc, b_fc=self.b_fc, w_r=self.w_r)
        return out

    def with_parameters(self, params: dict[str, np.ndarray]) -> "BiLstmModel":
        fwd = LstmParams(**{k[4:]: v for k, v in params.items() if k.startswith("fwd.")})
        bwd = None
        if self.bwd is not None:
            bwd = LstmParams(**{k[4:]: v for k, v in params.items() if k.startswith("bwd.")})
        return BiLstmModel(fwd, bwd, params["w_fc"], params["b_fc"], params["w_r"], self.window,
                           self.lambda1, self.lambda2, self.fusion, self.scaler, dict(self.meta))

    def parameter_count(self) -> int:
        return sum(v.size for v in self.parameters().values())

    def copy(self) -> "BiLstmModel":
        return copy.deepcopy(self)


@dataclass
class ForwardCache:
    squeeze: bool
    fwd_cache: list
    bwd_cache: list | None
    flat: np.ndarray
    fc_pre: np.ndarray
    fc_out: np.ndarray
    mask: np.ndarray | None
    fc_dropped: np.ndarray


def _as_batch(model: BiLstmModel, windows) -> tuple[np.ndarray, bool]:
    x = np.asarray(windows, dtype=np.float64)
    squeeze = False
    if x.ndim == 1:
        x, squeeze = x[None, :, None], True
    elif x.ndim == 2:
        if model.input_size == 1:
            x = x[:, :, None]
        else:
            x, squeeze = x[None], True
    if x.ndim != 3 or x.shape[2] != model.input_size:
        raise ShapeError(f"cannot interpret window array of shape {np.shape(windows)} "
                         f"for input size {model.input_size}")
    if x.shape[1] != model.window:
        raise ShapeError(f"window length {x.shape[1]} does not match model window {model.window}")
    return x, squeeze


def bilstm_forward(model: BiLstmModel, windows):
    """Fused per-step features ``H`` of shape ``(batch, window, feature_size)``.

    Returns ``(H, (fwd_cache, bwd_cache))``; the backward cache is in the
    backward LSTM's own (reversed) step order. A single window gives ``H`` of
    shape ``(window, feature_size)``.
    """
    x, squeeze = _as_batch(model, windows)
    steps = x.transpose(1, 0, 2)  # (time, batch, input)
    _, fwd_cache = lstm_sequence_forward(model.fwd, steps)
    hf = fwd_cache.h.transpose(1, 0, 2)
    if model.bwd is None:
        feats = hf
        bwd_cache = None
    else:
        _, bwd_cache = lstm_sequence_forward(model.bwd, steps[::-1])
        # align: position t holds the state after consuming x[T-1], ..., x[t]
        hb = bwd_cache.h[::-1].transpose(1, 0, 2)
        f = hf * model.lambda1
        b = hb * model.lambda2
        feats = np.concatenate([f, b], axis=2) if model.fusion == "concat" else f + b
    return (feats[0] if squeeze else feats), (fwd_cache, bwd_cache)


def fc_forward(model: BiLstmModel, features) -> np.ndarray:
    """``relu(W_fc . flatten(H) + b_fc)`` for one feature sequence or a batch."""
    h = np.asarray(features, dtype=np.float64)
    flat = h.reshape(-1) if h.ndim == 2 else h.reshape(h.shape[0], -1)
    if flat.shape[-1] != model.w_fc.shape[1]:
        raise ShapeError(f"feature size {flat.shape[-1]} does not match w_fc {model.w_fc.shape}")
    return relu(flat @ model.w_fc.T + model.b_fc)


def regress(model: BiLstmModel, fc_out) -> np.ndarray:
    """Linear, bias-free head: ``W_r . o``."""
    o = np.asarray(fc_out, dtype=np.float64)
    if o.shape[-1] != model.fc_size:
        raise ShapeError(f"FC output size {o.shape[-1]} does not match w_r {model.w_r.shape}")
    return o @ model.w_r.T


def forward(model: BiLstmModel, windows, dropout_mask=None):
    """Full pass from standardized windows to standardized forecasts.

    ``dropout_mask`` (already scaled by ``1/(1-rate)``) multiplies the FC output
    during training. Returns ``(y_hat, ForwardCache)``.
    """
    x, squeeze = _as_batch(model, windows)
    feats, (fwd_cache, bwd_cache) = bilstm_forward(model, x)
    flat = feats.reshape(feats.shape[0], -1)
    pre = flat @ model.w_fc.T + model.b_fc
    out = relu(pre)
    dropped = out if dropout_mask is None else out * dropout_mask
    y = dropped @ model.w_r.T
    cache = ForwardCache(squeeze, fwd_cache, bwd_cache, flat, pre, out, dropout_mask, dropped)
    return (y[0] if squeeze else y), cache


def model_backward(model: BiLstmModel, cache: ForwardCache, d_y, truncation: int | None = None):
    """Gradients of the loss for every trainable array, keyed like ``model.parameters()``.

    ``d_y`` is the loss gradient with respect to the forecasts. ``truncation``
    enables truncated BPTT inside each LSTM direction.
    """
    d_y = np.asarray(d_y, dtype=np.float64)
    if cache.squeeze:
        d_y = d_y[None]
    B = cache.flat.shape[0]
    if d_y.shape != (B, model.output_size):
        raise ShapeError(f"upstream gradient shape {d_y.shape} does not match forecasts ({B}, {model.output_size})")
    if cache.flat.shape[1] != model.w_fc.shape[1] or len(cache.fwd_cache) != model.window:
        raise ShapeError("cache does not belong to this model")
    if (cache.bwd_cache is None) != (model.bwd is None):
        raise ShapeError("cache does not belong to this model")
    grads = {}
    d_w_r = d_y.T @ cache.fc_dropped
    d_out = d_y @ model.w_r
    if cache.mask is not None:
        d_out = d_out * cache.mask
    d_pre = d_out * (cache.fc_pre > 0.0)
    d_w_fc = d_pre.T @ cache.flat
    d_b_fc = d_pre.sum(axis=0)
    d_feats = (d_pre @ model.w_fc).reshape(B, model.window, model.feature_size)
    H = model.hidden_size
    if model.bwd is None:
        d_hf = d_feats
    elif model.fusion == "concat":
        d_hf = model.lambda1 * d_feats[:, :, :H]
        d_hb = model.lambda2 * d_feats[:, :, H:]
    else:
        d_hf = model.lambda1 * d_feats
        d_hb = model.lambda2 * d_feats
    g_fwd, _ = lstm_sequence_backward(model.fwd, cache.fwd_cache, d_hf.transpose(1, 0, 2), truncation)
    grads.update({f"fwd.{k}": v for k, v in g_fwd.arrays().items()})
    if model.bwd is not None:
        # the backward LSTM's step k saw original position T-1-k
        g_bwd, _ = lstm_sequence_backward(model.bwd, cache.bwd_cache,
                                          d_hb.transpose(1, 0, 2)[::-1], truncation)
        grads.update({f"bwd.{k}": v for k, v in g_bwd.arrays().items()})
    grads.update(w_fc=d_w_fc, b_fc=d_b_fc, w_r=d_w_r)
    return grads


def predict(model: BiLstmModel, window, scaler=None) -> np.ndarray:
    """Forecast in original load units (inverse z-score, clamped at zero)."""
    scaler = model.scaler if scaler is None else scaler
    if scaler is None:
        raise ValueError("predict needs the training-split scaler")
    y, _ = forward(model, window)
    return np.maximum(scaler.inverse(y), 0.0)
