"""Comparison predictors: least-squares AR(p) and the unidirectional LSTM."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bilstm import BiLstmModel

MODEL_NAMES = ("ar", "lstm", "bilstm")
DEFAULT_AR_ORDER = 16


class SingularDesignError(np.linalg.LinAlgError):
    pass


@dataclass
class ArModel:
    coefficients: np.ndarray   # phi_1 .. phi_p, lag 1 first
    intercept: float = 0.0
    scaler: object | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64).ravel()
        if self.coefficients.size < 1:
            raise ValueError("AR order must be >= 1")
        if not np.all(np.isfinite(self.coefficients)) or not np.isfinite(self.intercept):
            raise ValueError("AR coefficients must be finite")

    @property
    def order(self) -> int:
        return self.coefficients.size


def _lag_matrix(x: np.ndarray, p: int):
    # row t: [1, x[t-1], ..., x[t-p]] predicting x[t]
    lags = np.lib.stride_tricks.sliding_window_view(x, p)[:-1, ::-1]
    return np.column_stack([np.ones(len(lags)), lags]), x[p:]


def ar_fit(series, p: int = DEFAULT_AR_ORDER) -> ArModel:
    """Least-squares fit of ``x_t = c + sum_j phi_j x_{t-j}``.

    ``series`` is one array or a list of arrays (e.g. several machines); lag
    rows never straddle two arrays.
    """
    if p < 1:
        raise ValueError("AR order must be >= 1")
    parts = [np.asarray(series, dtype=np.float64)] if np.ndim(series[0]) == 0 else \
        [np.asarray(s, dtype=np.float64) for s in series]
    designs, targets = [], []
    for x in parts:
        if len(x) > p:
            a, b = _lag_matrix(x, p)
            designs.append(a)
            targets.append(b)
    if not designs:
        raise ValueError(f"series must be longer than the AR order {p}")
    a = np.vstack(designs)
    b = np.concatenate(targets)
    sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < p + 1:
        raise SingularDesignError(f"AR({p}) design matrix is rank deficient ({rank} < {p + 1}); "
                                  "is the series constant?")
    return ArModel(sol[1:], float(sol[0]))


def ar_predict(model: ArModel, history, horizon: int) -> np.ndarray:
    """Iterated one-step forecasts, each fed back as the newest lag.

    ``history`` may be a batch ``(count, length)``; the forecast then has shape
    ``(count, horizon)``.
    """
    h = np.asarray(history, dtype=np.float64)
    single = h.ndim == 1
    h = np.atleast_2d(h)
    p = model.order
    if h.shape[1] < p:
        raise ValueError(f"history of {h.shape[1]} values is shorter than AR order {p}")
    lags = h[:, -p:][:, ::-1].copy()  # newest first
    out = np.empty((h.shape[0], horizon))
    for k in range(horizon):
        nxt = model.intercept + lags @ model.coefficients
        out[:, k] = nxt
        lags = np.column_stack([nxt, lags[:, :-1]])
    return out[0] if single else out


def lstm_baseline(**kwargs) -> BiLstmModel:
    """Unidirectional LSTM with the same FC and regression head as the BiLSTM."""
    kwargs["bidirectional"] = False
    return BiLstmModel.init(**kwargs)


def degenerate_bilstm(uni: BiLstmModel, bwd_seed: int = 0) -> BiLstmModel:
    """A BiLSTM that reproduces ``uni`` exactly.

    The forward direction copies ``uni``, the backward direction is random but
    silenced by ``lambda2 = 0`` and zeroed FC columns for its half of each step.
    """
    if uni.bidirectional:
        raise ValueError("expected a unidirectional model")
    H, T = uni.hidden_size, uni.window
    bi = BiLstmModel.init(input_size=uni.input_size, hidden_size=H, window=T,
                          output_size=uni.output_size, fc_size=uni.fc_size, seed=bwd_seed)
    w_fc = np.zeros((uni.fc_size, T, 2 * H))
    w_fc[:, :, :H] = uni.w_fc.reshape(uni.fc_size, T, H)
    return BiLstmModel(uni.fwd, bi.bwd, w_fc.reshape(uni.fc_size, -1), uni.b_fc.copy(),
                       uni.w_r.copy(), T, lambda1=1.0, lambda2=0.0, fusion="concat",
                       scaler=uni.scaler)
