"""Host-load forecasting with a from-scratch BiLSTM, AR and LSTM baselines."""
from .baselines import ArModel, ar_fit, ar_predict, degenerate_bilstm, lstm_baseline
from .bilstm import BiLstmModel, bilstm_forward, fc_forward, forward, model_backward, predict, regress
from .esp import SegmentScheme, esp_transform, make_scheme
from .ingest import (MachineSeries, Scaler, Task, aggregate, make_windows, parse_trace,
                     split_by_days, standardize)
from .metrics import boxplot_summary, cdf_points, mse, msse
from .modelio import load_model, save_model
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ArModel", "ar_fit", "ar_predict", "degenerate_bilstm", "lstm_baseline",
    "BiLstmModel", "bilstm_forward", "fc_forward", "forward", "model_backward", "predict", "regress",
    "SegmentScheme", "esp_transform", "make_scheme",
    "MachineSeries", "Scaler", "Task", "aggregate", "make_windows", "parse_trace", "split_by_days", "standardize",
    "boxplot_summary", "cdf_points", "mse", "msse",
    "load_model", "save_model",
    "TrainConfig", "train",
]
