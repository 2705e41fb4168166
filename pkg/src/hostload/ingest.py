"""Trace ingestion: usage records -> per-machine interval series -> training windows.

Trace format ("simple" schema), one record per line, comma or tab separated,
optional header line::

    start_us, end_us, machine_id, usage[, memory_usage]

With five columns the fourth column is CPU and the fifth memory, and the
``resource`` argument picks one. With four columns the usage column is taken
as-is for either resource.

The "google" schema reads the task_usage table of the 2011 Google cluster
trace directly: column 0 start time, 1 end time, 4 machine id, 5 mean CPU
usage rate, 6 canonical memory usage.
"""
from __future__ import annotations

import io
import logging
import math
import os
import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .esp import SegmentScheme, esp_transform, make_scheme

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400
DAY_BOUNDARIES = (20, 26, 29)


class TraceFormatError(ValueError):
    """The trace stream is unreadable or too many lines are malformed."""


class EmptySeriesError(ValueError):
    pass


@dataclass(frozen=True)
class UsageRecord:
    start_time: int
    end_time: int
    machine_id: str
    resource_usage: float


@dataclass
class TraceParseResult:
    records: list[UsageRecord]
    bad_lines: int = 0
    total_lines: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


_GOOGLE_COLUMNS = {"cpu": 5, "memory": 6}


def _detect_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def _is_header(parts: list[str]) -> bool:
    try:
        float(parts[0])
        return False
    except ValueError:
        return True


def parse_trace(stream, resource: str = "cpu", schema: str = "simple",
                max_bad_ratio: float = 0.05) -> TraceParseResult:
    """Parse delimited usage records from a text stream (or a path).

    Malformed lines (wrong column count, unparsable numbers, negative or
    non-finite usage, ``end <= start``) are skipped and counted. If their share
    of all data lines exceeds ``max_bad_ratio`` a :class:`TraceFormatError` is raised.
    """
    if resource not in ("cpu", "memory"):
        raise ValueError(f"resource must be 'cpu' or 'memory', not {resource!r}")
    if schema not in ("simple", "google"):
        raise ValueError(f"unknown trace schema {schema!r}")
    if isinstance(stream, (str, os.PathLike)):
        try:
            with open(stream, encoding="utf-8") as fh:
                return parse_trace(fh, resource, schema, max_bad_ratio)
        except OSError as exc:
            raise TraceFormatError(f"cannot read trace {os.fspath(stream)!r}: {exc}") from exc

    records: list[UsageRecord] = []
    bad = total = 0
    delim = None
    first = True
    try:
        for raw in stream:
            line = raw.strip()
            if not line:
                continue
            if delim is None:
                delim = _detect_delimiter(line)
            parts = [p.strip() for p in line.split(delim)]
            if first:
                first = False
                if schema == "simple" and _is_header(parts):
                    continue
            total += 1
            rec = _parse_line(parts, resource, schema)
            if rec is None:
                bad += 1
            else:
                records.append(rec)
    except (OSError, UnicodeDecodeError) as exc:
        raise TraceFormatError(f"unreadable trace stream: {exc}") from exc
    if total and bad / total > max_bad_ratio:
        raise TraceFormatError(f"{bad} of {total} trace lines malformed "
                               f"(limit {max_bad_ratio:.1%})")
    if bad:
        log.warning("skipped %d malformed trace lines out of %d", bad, total)
    return TraceParseResult(records, bad, total)


def _parse_line(parts, resource, schema):
    try:
        if schema == "google":
            start, end, machine = int(parts[0]), int(parts[1]), parts[4]
            usage = float(parts[_GOOGLE_COLUMNS[resource]])
        else:
            if len(parts) not in (4, 5):
                return None
            start, end, machine = int(parts[0]), int(parts[1]), parts[2]
            col = 4 if resource == "memory" and len(parts) == 5 else 3
            usage = float(parts[col])
    except (ValueError, IndexError):
        return None
    if not machine or end <= start or not math.isfinite(usage) or usage < 0:
        return None
    return UsageRecord(start, end, machine, usage)


@dataclass
class MachineSeries:
    machine_id: str
    values: np.ndarray
    interval_seconds: int = 300
    start_timestamp: int = 0   # microseconds

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    def __len__(self):
        return len(self.values)

    @property
    def points_per_day(self) -> int:
        return SECONDS_PER_DAY // self.interval_seconds

    def timestamps(self) -> np.ndarray:
        step = self.interval_seconds * 1_000_000
        return self.start_timestamp + step * np.arange(len(self.values), dtype=np.int64)


def aggregate(records: Iterable[UsageRecord], machine_id: str, interval_seconds: int = 300,
              start_timestamp: int | None = None, n_intervals: int | None = None) -> MachineSeries:
    """Sum task usage per interval, weighting each task by its overlap fraction.

    Intervals with no overlapping task repeat the previous interval's value
    (zero before the first covered interval). ``start_timestamp`` (µs) and
    ``n_intervals`` pin the grid so several machines share one time axis.
    """
    recs = [r for r in records if r.machine_id == machine_id]
    if not recs:
        raise EmptySeriesError(f"no usage records for machine {machine_id!r}")
    step = interval_seconds * 1_000_000
    starts = np.array([r.start_time for r in recs], dtype=np.int64)
    ends = np.array([r.end_time for r in recs], dtype=np.int64)
    usage = np.array([r.resource_usage for r in recs], dtype=np.float64)
    t0 = (int(starts.min()) // step) * step if start_timestamp is None else int(start_timestamp)
    if n_intervals is None:
        n_intervals = max(1, -(-(int(ends.max()) - t0) // step))

    s = np.clip(starts - t0, 0, n_intervals * step)
    e = np.clip(ends - t0, 0, n_intervals * step)
    keep = e > s
    s, e, usage = s[keep], e[keep], usage[keep]
    first = s // step
    last = (e - 1) // step
    total = np.zeros(n_intervals + 1)

    same = first == last
    np.add.at(total, first[same], usage[same] * (e[same] - s[same]) / step)
    multi = ~same
    f, l, u = first[multi], last[multi], usage[multi]
    np.add.at(total, f, u * ((f + 1) * step - s[multi]) / step)
    np.add.at(total, l, u * (e[multi] - l * step) / step)
    # whole intervals strictly between first and last via a difference array
    full = np.zeros(n_intervals + 2)
    inner = l > f + 1
    np.add.at(full, f[inner] + 1, u[inner])
    np.add.at(full, l[inner], -u[inner])
    total += np.cumsum(full)[:n_intervals + 1]
    cov = np.zeros(n_intervals + 2, dtype=np.int64)
    np.add.at(cov, first, 1)
    np.add.at(cov, last + 1, -1)
    covered = np.cumsum(cov)[:n_intervals]

    values = total[:n_intervals]
    filled = np.empty(n_intervals)
    prev = 0.0
    for k in range(n_intervals):
        if covered[k] > 0:
            prev = values[k]
        filled[k] = prev
    return MachineSeries(machine_id, filled, interval_seconds, t0)


@dataclass(frozen=True)
class Scaler:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("scaler std must be positive")

    @classmethod
    def fit(cls, values) -> "Scaler":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise ValueError("cannot fit a scaler on no data")
        std = float(np.std(values))
        if not std > 0:
            raise ValueError("training data is constant; cannot standardize")
        return cls(float(np.mean(values)), std)

    def transform(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values):
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


@dataclass(frozen=True)
class DatasetSplit:
    train: range
    validation: range
    test: range


def split_by_days(length: int, points_per_day: int = 288,
                  day_boundaries: tuple[int, int, int] = DAY_BOUNDARIES) -> DatasetSplit:
    """Train on days ``[1, 20]``, validate on ``(20, 26]``, test on ``(26, 29]``.

    ``length`` may be a series length or anything with ``len()``. Points past
    the last boundary are ignored.
    """
    if not isinstance(length, (int, np.integer)):
        if isinstance(length, MachineSeries):
            points_per_day = length.points_per_day
        length = len(length)
    a, b, c = (d * points_per_day for d in day_boundaries)
    if not 0 < a < b < c:
        raise ValueError(f"day boundaries {day_boundaries} do not define three non-empty splits")
    if length < c:
        raise ValueError(f"series of {length} points is shorter than {day_boundaries[-1]} days "
                         f"at {points_per_day} points per day")
    return DatasetSplit(range(0, a), range(a, b), range(b, c))


def standardize(series, split: DatasetSplit):
    """Z-score the whole series with statistics from the training range only."""
    values = series.values if isinstance(series, MachineSeries) else np.asarray(series, dtype=np.float64)
    scaler = Scaler.fit(values[split.train.start:split.train.stop])
    return scaler.transform(values), scaler


_TASK_RE = re.compile(r"^(actual|esp):(\d+)$")


@dataclass(frozen=True)
class Task:
    """Prediction target: ``actual:m`` (next m loads) or ``esp:n`` (n ESP segment means)."""
    kind: str
    size: int
    baseline: int = 1

    def __post_init__(self):
        if self.kind not in ("actual", "esp"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("task size must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "Task":
        m = _TASK_RE.match(text.strip())
        if not m:
            raise ValueError(f"task must look like 'actual:m' or 'esp:n', got {text!r}")
        return cls(m.group(1), int(m.group(2)))

    def __str__(self):
        return f"{self.kind}:{self.size}"

    @property
    def scheme(self) -> SegmentScheme | None:
        return make_scheme(self.size, self.baseline) if self.kind == "esp" else None

    @property
    def horizon(self) -> int:
        """Future steps consumed by one target."""
        return self.size if self.kind == "actual" else self.scheme.total

    @property
    def output_size(self) -> int:
        return self.size

    def targets(self, future) -> np.ndarray:
        future = np.asarray(future, dtype=np.float64)
        if self.kind == "actual":
            return future[..., :self.size]
        return esp_transform(future, self.scheme)


def make_windows(values, span: range | None, w_in: int, task: Task):
    """Stride-1 (history, target) pairs fully inside ``span``.

    Returns ``(histories, targets)`` arrays of shapes ``(count, w_in)`` and
    ``(count, task.output_size)``.
    """
    values = np.asarray(values, dtype=np.float64)
    if span is not None:
        values = values[span.start:span.stop]
    need = w_in + task.horizon
    if w_in < 1 or len(values) < need:
        raise ValueError(f"range of {len(values)} points is too short for window {w_in} "
                         f"plus horizon {task.horizon}")
    frames = np.lib.stride_tricks.sliding_window_view(values, need)
    histories = frames[:, :w_in].copy()
    targets = task.targets(frames[:, w_in:])
    return histories, np.ascontiguousarray(targets)


def write_series(path, series: MachineSeries) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# machine_id={series.machine_id} interval_seconds={series.interval_seconds}\n")
        fh.write("timestamp_us,value\n")
        for ts, v in zip(series.timestamps(), series.values):
            fh.write(f"{int(ts)},{float(v)!r}\n")


def read_series(path) -> MachineSeries:
    meta = {}
    stamps, values = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta.update(kv.split("=", 1) for kv in line[1:].split() if "=" in kv)
                continue
            if line.startswith("timestamp"):
                continue
            ts, v = line.split(",")
            stamps.append(int(ts))
            values.append(float(v))
    if not values:
        raise EmptySeriesError(f"series file {os.fspath(path)!r} has no values")
    machine = meta.get("machine_id", os.path.splitext(os.path.basename(path))[0])
    return MachineSeries(machine, np.array(values), int(meta.get("interval_seconds", 300)), stamps[0])


def records_to_text(records: Iterable[UsageRecord]) -> str:
    buf = io.StringIO()
    buf.write("start_us,end_us,machine_id,usage\n")
    for r in records:
        buf.write(f"{r.start_time},{r.end_time},{r.machine_id},{r.resource_usage!r}\n")
    return buf.getvalue()
