"""Evaluation harness: pooled training data, per-machine test metrics, report files."""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .baselines import DEFAULT_AR_ORDER, ArModel, ar_fit, ar_predict
from .bilstm import BiLstmModel, forward
from .esp import esp_transform
from .ingest import MachineSeries, Scaler, Task, make_windows, split_by_days
from .metrics import BoxplotSummary, boxplot_summary, cdf_points, msse
from .training import TrainConfig, train

Predictor = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class Prepared:
    series: list[MachineSeries]
    splits: list
    scaler: Scaler


def prepare(series_list: Sequence[MachineSeries], points_per_day: int | None = None) -> Prepared:
    """Split every machine by day and fit one scaler on the pooled training ranges."""
    series_list = sorted(series_list, key=lambda s: s.machine_id)
    if not series_list:
        raise ValueError("no series to prepare")
    splits = [split_by_days(len(s), points_per_day or s.points_per_day) for s in series_list]
    pooled = np.concatenate([s.values[sp.train.start:sp.train.stop] for s, sp in zip(series_list, splits)])
    return Prepared(series_list, splits, Scaler.fit(pooled))


def windows_for(prep: Prepared, part: str, w_in: int, task: Task):
    xs, ys = [], []
    for s, sp in zip(prep.series, prep.splits):
        x, y = make_windows(prep.scaler.transform(s.values), getattr(sp, part), w_in, task)
        xs.append(x)
        ys.append(y)
    return np.concatenate(xs), np.concatenate(ys)


def fit_model(name: str, series_list, task: Task, config: TrainConfig, *,
              points_per_day: int | None = None, ar_order: int = DEFAULT_AR_ORDER, log_stream=None):
    """Train one of the registered models (``ar``, ``lstm``, ``bilstm``) on pooled machines.

    Returns ``(model, train_state)``; the state is ``None`` for AR.
    """
    prep = prepare(series_list, points_per_day)
    meta = {"task": str(task), "input_window": config.input_window, "seed": config.rng_seed}
    if name == "ar":
        parts = [prep.scaler.transform(s.values[sp.train.start:sp.train.stop])
                 for s, sp in zip(prep.series, prep.splits)]
        model = ar_fit(parts, ar_order)
        model.scaler = prep.scaler
        model.meta = meta
        return model, None
    if name not in ("lstm", "bilstm"):
        raise ValueError(f"unknown model {name!r}; choose from ar, lstm, bilstm")
    w_in = config.input_window
    model = BiLstmModel.init(input_size=1, hidden_size=config.hidden_size, window=w_in,
                             output_size=task.output_size, fc_size=config.fc_size,
                             seed=config.rng_seed, bidirectional=name == "bilstm",
                             fusion=config.fusion)
    best, state = train(model, windows_for(prep, "train", w_in, task),
                        windows_for(prep, "validation", w_in, task), config, log_stream)
    best.scaler = prep.scaler
    best.meta = meta
    return best, state


def model_task(model) -> Task | None:
    text = (getattr(model, "meta", None) or {}).get("task")
    return Task.parse(text) if text else None


def make_predictor(model, task: Task, w_in: int | None = None) -> Predictor:
    """Wrap a model as ``predictor(raw_values, origins) -> raw forecasts``.

    The history for origin ``t`` is ``raw_values[t - w_in:t]``.
    """
    if isinstance(model, BiLstmModel):
        if model.output_size != task.output_size:
            raise ValueError(f"model predicts {model.output_size} values, task {task} needs {task.output_size}")
        w_in = model.window

        def predictor(values, origins):
            hist = np.stack([values[o - w_in:o] for o in origins])
            y, _ = forward(model, model.scaler.transform(hist))
            return np.maximum(model.scaler.inverse(y), 0.0)
    elif isinstance(model, ArModel):
        w_in = w_in or int(model.meta.get("input_window", model.order))
        if w_in < model.order:
            raise ValueError("history window shorter than AR order")

        def predictor(values, origins):
            hist = np.stack([values[o - w_in:o] for o in origins])
            path = ar_predict(model, model.scaler.transform(hist), task.horizon)
            out = model.scaler.inverse(path)
            if task.kind == "esp":
                out = esp_transform(out, task.scheme)
            return np.maximum(out, 0.0)
    else:
        raise TypeError(f"no predictor for {type(model).__name__}")
    predictor.window = w_in
    return predictor


def truth_echo(task: Task, w_in: int) -> Predictor:
    """Oracle that returns the true targets; useful for checking the harness."""
    def predictor(values, origins):
        return task.targets(np.stack([values[o:o + task.horizon] for o in origins]))
    predictor.window = w_in
    return predictor


@dataclass
class EvalReport:
    model: str
    task: Task
    metric: str
    per_machine: dict[str, float]
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return np.array([self.per_machine[k] for k in sorted(self.per_machine)])

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def median(self) -> float:
        return float(np.median(self.values))

    @property
    def cdf(self) -> list[tuple[float, float]]:
        return cdf_points(self.values)

    @property
    def boxplot(self) -> BoxplotSummary:
        return boxplot_summary(self.values)


def evaluate(predictor: Predictor, series_list, task: Task, *, model_name: str = "model",
             points_per_day: int | None = None, part: str = "test", batch: int = 1024) -> EvalReport:
    """Per-machine mean MSE (actual task) or MSSE (esp task) over stride-1 windows of ``part``."""
    started = time.perf_counter()
    w_in = predictor.window
    scores = {}
    for s in sorted(series_list, key=lambda s: s.machine_id):
        span = getattr(split_by_days(len(s), points_per_day or s.points_per_day), part)
        origins = np.arange(span.start + w_in, span.stop - task.horizon + 1)
        if len(origins) == 0:
            raise ValueError(f"{part} range of machine {s.machine_id} is too short for window {w_in} "
                             f"and horizon {task.horizon}")
        errs = []
        for a in range(0, len(origins), batch):
            o = origins[a:a + batch]
            pred = np.asarray(predictor(s.values, o), dtype=np.float64)
            truth = task.targets(np.stack([s.values[t:t + task.horizon] for t in o]))
            if pred.shape != truth.shape:
                raise ValueError(f"predictor returned {pred.shape}, expected {truth.shape}")
            if task.kind == "esp":
                errs.extend(msse(p, q, task.scheme) for p, q in zip(pred, truth))
            else:
                errs.extend(np.mean((pred - truth) ** 2, axis=1))
        scores[s.machine_id] = float(np.mean(errs))
    metric = "msse" if task.kind == "esp" else "mse"
    return EvalReport(model_name, task, metric, scores, time.perf_counter() - started)


def _fmt(v: float) -> str:
    return repr(float(v))


def report_stem(report: EvalReport) -> str:
    return f"{report.model}_{report.task.kind}{report.task.size}"


def write_report(report: EvalReport, out_dir) -> list[str]:
    """Per-machine, CDF and boxplot CSV files for one (model, task, horizon)."""
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, report_stem(report))
    paths = [stem + "_machines.csv", stem + "_cdf.csv", stem + "_boxplot.csv"]
    with open(paths[0], "w", newline="\n") as fh:
        fh.write(f"machine_id,{report.metric}\n")
        for k in sorted(report.per_machine):
            fh.write(f"{k},{_fmt(report.per_machine[k])}\n")
    with open(paths[1], "w", newline="\n") as fh:
        fh.write(f"{report.metric},fraction\n")
        for x, p in report.cdf:
            fh.write(f"{_fmt(x)},{_fmt(p)}\n")
    with open(paths[2], "w", newline="\n") as fh:
        fh.write("min,q1,median,q3,max\n")
        fh.write(",".join(_fmt(v) for v in report.boxplot) + "\n")
    return paths


def write_summary(reports: Sequence[EvalReport], out_dir, interval_seconds: int = 300) -> list[str]:
    """Summary rows (one per horizon) plus a separate wall-clock table.

    Timings live in their own file so the summary stays byte-reproducible.
    """
    os.makedirs(out_dir, exist_ok=True)
    summary = os.path.join(out_dir, "summary.csv")
    timing = os.path.join(out_dir, "timing.csv")
    with open(summary, "w", newline="\n") as fh, open(timing, "w", newline="\n") as th:
        fh.write("model,task,size,horizon_steps,length_minutes,metric,mean,median,machines\n")
        th.write("model,task,size,wall_clock_s\n")
        for r in reports:
            minutes = r.task.horizon * interval_seconds / 60.0
            fh.write(f"{r.model},{r.task.kind},{r.task.size},{r.task.horizon},{minutes:g},"
                     f"{r.metric},{_fmt(r.mean)},{_fmt(r.median)},{len(r.per_machine)}\n")
            th.write(f"{r.model},{r.task.kind},{r.task.size},{r.wall_clock:.3f}\n")
    return [summary, timing]
