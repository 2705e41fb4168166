"""Synthetic host-load series and traces for tests and desk-scale benchmarks.

Load = base level + stationary AR(2) fluctuation + white noise, optionally plus
a periodic batch-job burst (a rectangular pulse of fixed period and width with
a per-machine phase). Values are clipped at zero.
"""
from __future__ import annotations

import numpy as np

from .ingest import MachineSeries, UsageRecord


def ar2_noise_series(n: int, rng, phi=(0.6, 0.3), innovation=0.02, noise=0.005, level=0.3) -> np.ndarray:
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    burn = 200
    eps = rng.normal(0.0, innovation, n + burn)
    z = np.zeros(n + burn)
    for t in range(2, n + burn):
        z[t] = phi[0] * z[t - 1] + phi[1] * z[t - 2] + eps[t]
    return level + z[burn:] + rng.normal(0.0, noise, n)


def synthetic_series(machine_id: str = "m0", *, days: int = 29, points_per_day: int = 288,
                     seed: int = 0, burst_amplitude: float = 0.0, burst_period: int = 48,
                     burst_width: int = 12, interval_seconds: int | None = None,
                     **ar_kwargs) -> MachineSeries:
    """One machine's load. ``interval_seconds`` defaults to a day divided by ``points_per_day``."""
    rng = np.random.default_rng(seed)
    n = days * points_per_day
    values = ar2_noise_series(n, rng, **ar_kwargs)
    if burst_amplitude:
        phase = int(rng.integers(burst_period))
        t = np.arange(n) + phase
        values = values + burst_amplitude * ((t % burst_period) < burst_width)
    interval = interval_seconds or 86400 // points_per_day
    return MachineSeries(machine_id, np.maximum(values, 0.0), interval, 0)


def synthetic_machines(count: int, seed: int = 0, **kwargs) -> list[MachineSeries]:
    seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=count)
    return [synthetic_series(f"m{k:03d}", seed=int(s), **kwargs) for k, s in enumerate(seeds)]


def series_to_records(series: MachineSeries, tasks_per_interval: int = 1) -> list[UsageRecord]:
    """Usage records whose overlap-weighted aggregation reproduces ``series``.

    Each interval's load is split evenly over ``tasks_per_interval`` tasks that
    run for exactly that interval.
    """
    step = series.interval_seconds * 1_000_000
    out = []
    for k, (ts, v) in enumerate(zip(series.timestamps(), series.values)):
        for j in range(tasks_per_interval):
            out.append(UsageRecord(int(ts), int(ts) + step, series.machine_id, float(v) / tasks_per_interval))
    return out
