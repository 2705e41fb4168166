import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hostload.ingest import (EmptySeriesError, MachineSeries, Scaler, Task, TraceFormatError, UsageRecord,
                             aggregate, make_windows, parse_trace, read_series, records_to_text,
                             split_by_days, standardize, write_series)
from hostload.synthetic import series_to_records, synthetic_series

US = 1_000_000
STEP = 300 * US


def test_parse_empty_stream():
    res = parse_trace(io.StringIO(""))
    assert res.records == [] and res.bad_lines == 0


def test_parse_one_line_exact_fields():
    res = parse_trace(io.StringIO("0,300000000,m1,0.25\n"))
    assert res.records == [UsageRecord(0, 300000000, "m1", 0.25)]


def test_parse_rejects_negative_usage_and_counts():
    text = "start_us,end_us,machine_id,usage\n" + "".join(f"{k},{k + 5},m,0.1\n" for k in range(30)) + "0,5,m,-0.5\n"
    res = parse_trace(io.StringIO(text))
    assert len(res.records) == 30
    assert res.bad_lines == 1


def test_parse_bad_ratio_threshold():
    text = "0,5,m,0.1\n0,5,m,abc\n"
    with pytest.raises(TraceFormatError):
        parse_trace(io.StringIO(text))
    assert parse_trace(io.StringIO(text), max_bad_ratio=0.5).bad_lines == 1


def test_parse_tab_delimited_and_memory_column():
    res = parse_trace(io.StringIO("0\t10\tm2\t0.1\t0.7\n"), resource="memory")
    assert res.records[0].resource_usage == 0.7
    assert parse_trace(io.StringIO("0\t10\tm2\t0.1\t0.7\n")).records[0].resource_usage == 0.1


def test_parse_google_task_usage_columns():
    line = "600000000,900000000,3418309,0,4155527081,0.001562,0.001826,0.002,0,0,0,0\n"
    rec = parse_trace(io.StringIO(line), schema="google").records[0]
    assert rec == UsageRecord(600000000, 900000000, "4155527081", 0.001562)
    assert parse_trace(io.StringIO(line), "memory", "google").records[0].resource_usage == 0.001826


def test_parse_unreadable_path():
    with pytest.raises(TraceFormatError, match="no/such/file"):
        parse_trace("/no/such/file.csv")


def test_aggregate_single_interval():
    s = aggregate([UsageRecord(0, STEP, "m", 0.4)], "m")
    assert list(s.values) == [0.4]


def test_aggregate_overlapping_tasks_add():
    s = aggregate([UsageRecord(0, STEP, "m", 0.3), UsageRecord(0, STEP, "m", 0.2)], "m")
    assert s.values[0] == pytest.approx(0.5, abs=1e-15)


def test_aggregate_half_interval_overlap():
    s = aggregate([UsageRecord(0, STEP // 2, "m", 0.4)], "m", n_intervals=1, start_timestamp=0)
    assert s.values[0] == pytest.approx(0.2, abs=1e-15)


def test_aggregate_spanning_task_and_forward_fill():
    recs = [UsageRecord(STEP // 2, 3 * STEP, "m", 1.0), UsageRecord(5 * STEP, 6 * STEP, "m", 0.3)]
    s = aggregate(recs, "m", start_timestamp=0, n_intervals=7)
    assert np.allclose(s.values, [0.5, 1.0, 1.0, 1.0, 1.0, 0.3, 0.3])


def test_aggregate_zero_before_first_record():
    s = aggregate([UsageRecord(2 * STEP, 3 * STEP, "m", 0.6)], "m", start_timestamp=0, n_intervals=3)
    assert list(s.values) == [0.0, 0.0, 0.6]


def test_aggregate_no_records():
    with pytest.raises(EmptySeriesError):
        aggregate([UsageRecord(0, STEP, "a", 0.1)], "b")


record_st = st.builds(lambda s, d, u: UsageRecord(s, s + d, "m", u),
                      st.integers(0, 10 * STEP), st.integers(1, 4 * STEP), st.floats(0, 5))


@settings(max_examples=60, deadline=None)
@given(st.lists(record_st, min_size=1, max_size=8), st.lists(record_st, min_size=1, max_size=8))
def test_aggregation_is_additive(a, b):
    grid = dict(start_timestamp=0, n_intervals=16)
    # compare raw sums: forward-fill only touches uncovered intervals, so pad with a
    # tiny all-covering task to make every interval covered in every aggregate
    cover = UsageRecord(0, 16 * STEP, "m", 0.0)
    sa = aggregate(a + [cover], "m", **grid).values
    sb = aggregate(b + [cover], "m", **grid).values
    su = aggregate(a + b + [cover], "m", **grid).values
    assert np.allclose(sa + sb, su, rtol=1e-12, atol=1e-12)


def test_synthetic_records_round_trip():
    s = synthetic_series("m7", days=2, points_per_day=12, seed=3)
    back = aggregate(series_to_records(s, 3), "m7", s.interval_seconds)
    assert np.allclose(back.values, s.values, rtol=0, atol=1e-12)
    parsed = parse_trace(io.StringIO(records_to_text(series_to_records(s))))
    assert np.array_equal(aggregate(parsed.records, "m7", s.interval_seconds).values,
                          aggregate(series_to_records(s), "m7", s.interval_seconds).values)


def test_standardize_train_stats():
    split = split_by_days(6, points_per_day=1, day_boundaries=(3, 5, 6))
    z, sc = standardize(np.array([1.0, 2.0, 3.0, 10.0, 20.0, 30.0]), split)
    assert sc.mean == 2.0
    assert sc.std == pytest.approx(np.sqrt(2 / 3), abs=1e-15)
    assert z[1] == 0.0
    assert z[3] == pytest.approx((10 - 2) / np.sqrt(2 / 3), abs=1e-12)


def test_standardize_constant_train_errors():
    split = split_by_days(6, points_per_day=1, day_boundaries=(3, 5, 6))
    with pytest.raises(ValueError):
        standardize(np.array([1.0, 1.0, 1.0, 2.0, 3.0, 4.0]), split)


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=40).filter(lambda v: np.std(v) > 1e-3))
def test_scaler_round_trip_and_moments(values):
    sc = Scaler.fit(values)
    z = sc.transform(values)
    assert abs(np.mean(z)) < 1e-9
    assert abs(np.std(z) - 1) < 1e-9
    assert np.allclose(sc.inverse(z), values, rtol=1e-12, atol=1e-12 * max(1.0, np.max(np.abs(values))))


def test_split_sizes():
    sp = split_by_days(29 * 288)
    assert (len(sp.train), len(sp.validation), len(sp.test)) == (5760, 1728, 864)
    sp = split_by_days(290, points_per_day=10)
    assert (len(sp.train), len(sp.validation), len(sp.test)) == (200, 60, 30)
    assert sp.train.stop == sp.validation.start and sp.validation.stop == sp.test.start


def test_split_too_short():
    with pytest.raises(ValueError):
        split_by_days(20 * 288)


def test_make_windows_enumeration():
    x, y = make_windows(np.arange(1, 11), None, 3, Task("actual", 2))
    assert len(x) == 6
    assert list(x[0]) == [1, 2, 3] and list(y[0]) == [4, 5]
    assert list(x[-1]) == [6, 7, 8] and list(y[-1]) == [9, 10]


def test_make_windows_too_short():
    with pytest.raises(ValueError):
        make_windows(np.arange(4), None, 3, Task("actual", 2))


def test_make_windows_esp_target():
    x, y = make_windows([1, 2, 3, 4, 5], None, 3, Task("esp", 2))
    assert list(y[0]) == [4, 5]


def test_windows_stay_in_span():
    values = np.arange(100.0)
    x, y = make_windows(values, range(20, 50), 5, Task("actual", 3))
    assert x.min() >= 20 and y.max() <= 49


@settings(max_examples=40)
@given(st.integers(8, 60), st.integers(1, 6), st.sampled_from([("actual", 1), ("actual", 4), ("esp", 1), ("esp", 3)]))
def test_window_count(length, w_in, task):
    t = Task(*task)
    if length < w_in + t.horizon:
        return
    x, y = make_windows(np.arange(float(length)), None, w_in, t)
    assert len(x) == len(y) == length - w_in - t.horizon + 1
    assert y.shape[1] == t.output_size


def test_task_parse_and_properties():
    t = Task.parse("esp:4")
    assert (t.kind, t.size, t.horizon, t.output_size, str(t)) == ("esp", 4, 8, 4, "esp:4")
    assert Task.parse("actual:6").horizon == 6
    for bad in ("mean:4", "actual", "actual:0"):
        with pytest.raises(ValueError):
            Task.parse(bad)


def test_series_cache_round_trip(tmp_path):
    s = MachineSeries("m9", np.array([0.1, 1 / 3, 2.5e-7]), 300, 600 * US)
    write_series(tmp_path / "m9.csv", s)
    back = read_series(tmp_path / "m9.csv")
    assert back.machine_id == "m9" and back.start_timestamp == 600 * US
    assert np.array_equal(back.values, s.values)


def test_pipeline_is_deterministic():
    s = synthetic_series("m1", days=29, points_per_day=10, seed=11)
    text = records_to_text(series_to_records(s, 2))

    def run():
        recs = parse_trace(io.StringIO(text)).records
        agg = aggregate(recs, "m1", s.interval_seconds)
        sp = split_by_days(agg)
        z, _ = standardize(agg, sp)
        return make_windows(z, sp.train, 8, Task("actual", 3))

    (x1, y1), (x2, y2) = run(), run()
    assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
