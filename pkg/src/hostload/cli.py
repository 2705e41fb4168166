"""Command-line interface: ``hostload ingest|train|evaluate|predict``.

Every command accepts ``--config FILE`` (flat ``key=value`` lines, ``#``
comments) whose keys are the long flag names with dashes or underscores;
explicit flags win over the file. The resolved configuration is written next
to the command's outputs as ``<command>_config.txt``.

Exit status: 0 success, 2 usage error, 3 data error, 4 numeric divergence.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from .baselines import MODEL_NAMES, ArModel
from .bilstm import BiLstmModel, predict as bilstm_predict
from .evaluation import evaluate, fit_model, make_predictor, model_task, write_report, write_summary
from .ingest import (EmptySeriesError, Task, TraceFormatError, aggregate, parse_trace, read_series,
                     write_series)
from .modelio import ModelFileError, load_model, save_model
from .nn import DivergenceError
from .training import TrainConfig

log = logging.getLogger("hostload")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
OUT_ENV = "HOSTLOAD_OUT"
DEFAULT_OUT = "hostload-out"
MODEL_FILE = "model.hlm"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def read_config(path) -> dict[str, str]:
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
                key, value = (p.strip() for p in line.split("=", 1))
                out[key.replace("-", "_")] = value
    except OSError as exc:
        raise UsageError(f"cannot read config file {path!r}: {exc}") from exc
    return out


def write_config(path, resolved: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(resolved):
            value = resolved[key]
            if isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            fh.write(f"{key}={'' if value is None else value}\n")


_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}

# key -> (type, default); values from the config file arrive as strings
_COMMON = {"seed": (int, 0), "out": (str, None)}
_SPECS = {
    "ingest": {"trace": (str, None), "resource": (str, "cpu"), "schema": (str, "simple"),
               "machines": (int, 1000), "interval": (int, 300), "max_bad_ratio": (float, 0.05)},
    "train": {"series": (str, None), "model": (str, "bilstm"), "task": (str, "actual:6"),
              "points_per_day": (int, None), "ar_order": (int, 16),
              "input_window": (int, None), "hidden_size": (int, 128), "fc_size": (int, None),
              "batch_size": (int, 128), "max_epochs": (int, 90), "learning_rate": (float, 0.01),
              "momentum": (float, 0.9), "anneal_factor": (float, 0.1), "anneal_every": (int, 30),
              "clip_norm": (float, 5.0), "truncated_length": (int, None), "dropout_rate": (float, 0.01),
              "early_stop_patience": (int, 10), "fusion": (str, "concat")},
    "evaluate": {"series": (str, None), "model_file": (list, None), "task": (str, None),
                 "horizons": (str, None), "points_per_day": (int, None)},
    "predict": {"series": (str, None), "model_file": (str, None), "index": (int, None),
                "horizon": (int, None)},
}


def resolve(command: str, args: argparse.Namespace) -> dict:
    spec = dict(_COMMON, **_SPECS[command])
    from_file = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(from_file) - set(spec)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(sorted(unknown))}")
    resolved = {}
    for key, (kind, default) in spec.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
            continue
        if key in from_file:
            raw = from_file[key]
            try:
                resolved[key] = [v for v in raw.split(",") if v] if kind is list else kind(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {raw!r}") from exc
        else:
            resolved[key] = default
    if resolved["out"] is None:
        resolved["out"] = os.environ.get(OUT_ENV, DEFAULT_OUT)
    return resolved


def _series_dir(path: str) -> str:
    sub = os.path.join(path, "series")
    return sub if os.path.isdir(sub) else path


def load_series_dir(path: str):
    if not path:
        raise UsageError("--series is required")
    d = _series_dir(path)
    if not os.path.isdir(d):
        raise DataError(f"series directory {path!r} does not exist")
    files = sorted(f for f in os.listdir(d) if f.endswith(".csv"))
    if not files:
        raise DataError(f"no series files in {d!r}")
    return [read_series(os.path.join(d, f)) for f in files]


def cmd_ingest(cfg: dict) -> int:
    if not cfg["trace"]:
        raise UsageError("--trace is required")
    if cfg["resource"] not in ("cpu", "memory"):
        raise UsageError("--resource must be cpu or memory")
    if not os.path.isfile(cfg["trace"]):
        raise DataError(f"trace file not found: {cfg['trace']}")
    parsed = parse_trace(cfg["trace"], cfg["resource"], cfg["schema"], cfg["max_bad_ratio"])
    if not parsed.records:
        raise DataError(f"trace {cfg['trace']!r} contains no usable records")
    machines = sorted({r.machine_id for r in parsed.records})
    wanted = cfg["machines"]
    if wanted >= len(machines):
        if wanted > len(machines):
            log.warning("requested %d machines but the trace has only %d; using all", wanted, len(machines))
        chosen = machines
    else:
        rng = np.random.default_rng(cfg["seed"])
        chosen = sorted(machines[k] for k in rng.choice(len(machines), size=wanted, replace=False))
    step = cfg["interval"] * 1_000_000
    t0 = (min(r.start_time for r in parsed.records) // step) * step
    n = -(-(max(r.end_time for r in parsed.records) - t0) // step)
    by_machine = {m: [] for m in chosen}
    for r in parsed.records:
        if r.machine_id in by_machine:
            by_machine[r.machine_id].append(r)
    out = cfg["out"]
    series_dir = os.path.join(out, "series")
    os.makedirs(series_dir, exist_ok=True)
    for m in chosen:
        s = aggregate(by_machine[m], m, cfg["interval"], t0, n)
        write_series(os.path.join(series_dir, f"{m}.csv"), s)
    with open(os.path.join(out, "manifest.txt"), "w", newline="\n") as fh:
        fh.write(f"seed={cfg['seed']}\nresource={cfg['resource']}\ninterval_seconds={cfg['interval']}\n"
                 f"machines_in_trace={len(machines)}\nmachines_sampled={len(chosen)}\n"
                 f"bad_lines={parsed.bad_lines}\n")
        for m in chosen:
            fh.write(f"machine={m}\n")
    write_config(os.path.join(out, "ingest_config.txt"), cfg)
    print(f"ingested {len(chosen)} machines ({n} intervals each) into {series_dir}")
    return EXIT_OK


def _train_config(cfg: dict, task: Task) -> TrainConfig:
    overrides = {k: cfg[k] for k in _TRAIN_FIELDS if k in cfg and cfg[k] is not None}
    overrides["rng_seed"] = cfg["seed"]
    try:
        return TrainConfig.for_task(task, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _parse_task(text: str) -> Task:
    try:
        return Task.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(cfg: dict) -> int:
    if cfg["model"] not in MODEL_NAMES:
        raise UsageError(f"--model must be one of {', '.join(MODEL_NAMES)}")
    task = _parse_task(cfg["task"])
    series = load_series_dir(cfg["series"])
    config = _train_config(cfg, task)
    for key in _TRAIN_FIELDS:
        if key in cfg:
            cfg[key] = getattr(config, key)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "train_log.csv"), "w", newline="\n") as log_fh:
        model, state = fit_model(cfg["model"], series, task, config,
                                 points_per_day=cfg["points_per_day"], ar_order=cfg["ar_order"],
                                 log_stream=log_fh if cfg["model"] != "ar" else None)
    model.meta["model"] = cfg["model"]
    digest = save_model(os.path.join(out, MODEL_FILE), model)
    write_config(os.path.join(out, "train_config.txt"), cfg)
    extra = "" if state is None else f", best epoch {state.best_epoch}, val loss {state.best_val:.6g}"
    print(f"trained {cfg['model']} for {task} on {len(series)} machines{extra}; sha256 {digest}")
    return EXIT_OK


def _model_name(model) -> str:
    if isinstance(model, ArModel):
        return "ar"
    return "bilstm" if model.bidirectional else "lstm"


def cmd_evaluate(cfg: dict) -> int:
    files = cfg["model_file"]
    if not files:
        raise UsageError("at least one --model-file is required")
    series = load_series_dir(cfg["series"])
    task_arg = _parse_task(cfg["task"]) if cfg["task"] else None
    horizons = None
    if cfg["horizons"]:
        try:
            horizons = [int(h) for h in str(cfg["horizons"]).split(",") if h]
        except ValueError as exc:
            raise UsageError(f"bad --horizons {cfg['horizons']!r}") from exc
    reports = []
    for path in files:
        model = load_model(path)
        own = model_task(model)
        if isinstance(model, BiLstmModel):
            task = own or task_arg
            if task is None:
                raise UsageError(f"model {path!r} records no task; pass --task")
            if task_arg is not None and task_arg.kind != task.kind:
                raise UsageError(f"model {path!r} was trained for {task}, not {task_arg.kind}")
            if task.output_size != model.output_size:
                raise UsageError(f"model {path!r} predicts {model.output_size} values but task is {task}")
            if horizons is not None and task.size not in horizons:
                raise UsageError(f"model {path!r} predicts horizon {task.size}, not one of {horizons}")
            tasks = [task]
        else:
            base = task_arg or own
            if base is None:
                raise UsageError("--task is required for AR models without a recorded task")
            tasks = [Task(base.kind, h) for h in (horizons or [base.size])]
        for task in tasks:
            reports.append(evaluate(make_predictor(model, task), series, task,
                                    model_name=_model_name(model), points_per_day=cfg["points_per_day"]))
    out = cfg["out"]
    for r in reports:
        write_report(r, out)
    write_summary(reports, out, series[0].interval_seconds)
    write_config(os.path.join(out, "evaluate_config.txt"), cfg)
    for r in reports:
        print(f"{r.model} {r.task}: mean {r.metric} {r.mean:.6g} over {len(r.per_machine)} machines")
    return EXIT_OK


def cmd_predict(cfg: dict) -> int:
    if not cfg["model_file"] or not cfg["series"] or cfg["index"] is None:
        raise UsageError("--model-file, --series and --index are required")
    model = load_model(cfg["model_file"])
    s = read_series(cfg["series"])
    task = model_task(model)
    if isinstance(model, BiLstmModel):
        if cfg["horizon"] is not None and cfg["horizon"] != model.output_size:
            raise UsageError(f"model predicts {model.output_size} values, not {cfg['horizon']}")
        task = task or Task("actual", model.output_size)
        w_in = model.window
    else:
        if task is None and cfg["horizon"] is None:
            raise UsageError("--horizon is required for this AR model")
        kind = task.kind if task else "actual"
        task = Task(kind, cfg["horizon"] if cfg["horizon"] is not None else task.size)
        w_in = int(model.meta.get("input_window", model.order))
    t = cfg["index"]
    if t < w_in or t > len(s):
        raise DataError(f"index {t} out of range: need {w_in} <= index <= {len(s)}")
    if t + task.horizon > len(s):
        raise DataError(f"index {t} leaves fewer than {task.horizon} future values")
    history = s.values[t - w_in:t]
    if isinstance(model, BiLstmModel):
        predicted = bilstm_predict(model, model.scaler.transform(history))
    else:
        predicted = make_predictor(model, task)(s.values, np.array([t]))[0]
    actual = task.targets(s.values[t:t + task.horizon])
    out = cfg["out"]
    target = out if out.endswith(".csv") else os.path.join(out, "prediction.csv")
    os.makedirs(os.path.dirname(target) or ".", exist_ok=True)
    with open(target, "w", newline="\n") as fh:
        fh.write("step,predicted,actual\n")
        for k, (p, a) in enumerate(zip(predicted, actual), 1):
            fh.write(f"{k},{float(p)!r},{float(a)!r}\n")
    write_config(os.path.join(os.path.dirname(target) or ".", "predict_config.txt"), cfg)
    print(f"wrote {len(actual)} rows to {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hostload", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file; flags take precedence")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")

    p = sub.add_parser("ingest", help="aggregate a usage trace into per-machine series")
    common(p)
    p.add_argument("--trace")
    p.add_argument("--resource", choices=("cpu", "memory"))
    p.add_argument("--schema", choices=("simple", "google"))
    p.add_argument("--machines", type=int, help="number of machines to sample")
    p.add_argument("--interval", type=int, help="aggregation interval in seconds (default 300)")
    p.add_argument("--max-bad-ratio", type=float, dest="max_bad_ratio")

    p = sub.add_parser("train", help="train ar, lstm or bilstm on ingested series")
    common(p)
    p.add_argument("--series")
    p.add_argument("--model", choices=MODEL_NAMES)
    p.add_argument("--task", help="actual:m or esp:n")
    p.add_argument("--points-per-day", type=int, dest="points_per_day")
    p.add_argument("--ar-order", type=int, dest="ar_order")
    for name in ("input_window", "hidden_size", "fc_size", "batch_size", "max_epochs",
                 "anneal_every", "truncated_length", "early_stop_patience"):
        p.add_argument("--" + name.replace("_", "-"), type=int, dest=name)
    for name in ("learning_rate", "momentum", "anneal_factor", "clip_norm", "dropout_rate"):
        p.add_argument("--" + name.replace("_", "-"), type=float, dest=name)
    p.add_argument("--fusion", choices=("concat", "sum"))

    p = sub.add_parser("evaluate", help="per-machine test metrics, CDF and boxplot files")
    common(p)
    p.add_argument("--model-file", action="append", dest="model_file")
    p.add_argument("--series")
    p.add_argument("--task")
    p.add_argument("--horizons", help="comma-separated horizons (m or n)")
    p.add_argument("--points-per-day", type=int, dest="points_per_day")

    p = sub.add_parser("predict", help="predicted vs actual values at one forecast origin")
    common(p)
    p.add_argument("--model-file", dest="model_file")
    p.add_argument("--series", help="one series cache file")
    p.add_argument("--index", type=int, help="forecast origin (first predicted step)")
    p.add_argument("--horizon", type=int)
    return parser


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "evaluate": cmd_evaluate, "predict": cmd_predict}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"hostload: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"hostload: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, TraceFormatError, EmptySeriesError, ModelFileError, OSError, ValueError) as exc:
        print(f"hostload: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
