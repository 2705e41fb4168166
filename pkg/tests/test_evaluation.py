import numpy as np
import pytest

from hostload.evaluation import (evaluate, fit_model, make_predictor, prepare, truth_echo, windows_for,
                                 write_report, write_summary)
from hostload.ingest import Task
from hostload.synthetic import synthetic_machines, synthetic_series
from hostload.training import TrainConfig

PPD = 10


@pytest.fixture(scope="module")
def machines():
    return synthetic_machines(3, seed=5, points_per_day=PPD)


@pytest.mark.parametrize("task", [Task("actual", 6), Task("esp", 3)])
def test_truth_echo_scores_zero(machines, task):
    r = evaluate(truth_echo(task, 8), machines, task)
    assert all(v == 0.0 for v in r.per_machine.values())
    assert r.metric == ("msse" if task.kind == "esp" else "mse")
    assert r.cdf == [(0.0, 1.0)]


def test_prepare_pools_training_ranges(machines):
    prep = prepare(machines[::-1])
    assert [s.machine_id for s in prep.series] == sorted(s.machine_id for s in machines)
    pooled = np.concatenate([s.values[:20 * PPD] for s in prep.series])
    assert prep.scaler.mean == pytest.approx(pooled.mean(), rel=1e-12)
    x, y = windows_for(prep, "train", 8, Task("actual", 2))
    assert len(x) == 3 * (20 * PPD - 8 - 2 + 1)


def test_evaluate_machine_means(machines):
    task = Task("actual", 2)
    r = evaluate(truth_echo(task, 4), machines, task)
    assert sorted(r.per_machine) == [s.machine_id for s in sorted(machines, key=lambda s: s.machine_id)]

    def shifted(values, origins):
        return task.targets(np.stack([values[o:o + 2] for o in origins])) + 0.5
    shifted.window = 4
    r = evaluate(shifted, machines, task)
    assert all(v == pytest.approx(0.25) for v in r.per_machine.values())


def test_ar_predictor_esp_and_reports(tmp_path):
    machines = synthetic_machines(3, seed=5, points_per_day=24)
    cfg = TrainConfig(input_window=16)
    model, state = fit_model("ar", machines, Task("actual", 1), cfg, ar_order=4)
    assert state is None and model.meta["input_window"] == 16
    reports = [evaluate(make_predictor(model, Task("actual", m)), machines, Task("actual", m), model_name="ar")
               for m in (6, 12, 18, 24, 30, 36)]
    esp = evaluate(make_predictor(model, Task("esp", 3)), machines, Task("esp", 3), model_name="ar")
    files = write_summary(reports + [esp], tmp_path, 300)
    rows = open(files[0]).read().splitlines()
    assert rows[0].startswith("model,task,size,horizon_steps,length_minutes,metric")
    assert len(rows) == 8
    assert rows[-1].startswith("ar,esp,3,4,20,msse")
    paths = write_report(esp, tmp_path)
    assert [p.rsplit("/", 1)[1] for p in paths] == ["ar_esp3_machines.csv", "ar_esp3_cdf.csv", "ar_esp3_boxplot.csv"]
    assert len(open(paths[0]).read().splitlines()) == 4


def test_neural_fit_and_output_size(machines):
    cfg = TrainConfig(input_window=8, hidden_size=3, batch_size=64, max_epochs=1, truncated_length=None)
    model, state = fit_model("bilstm", machines, Task("actual", 6), cfg)
    assert model.output_size == 6 and model.bidirectional and model.scaler is not None
    model, _ = fit_model("lstm", machines, Task("esp", 4), cfg)
    assert model.output_size == 4 and not model.bidirectional
    with pytest.raises(ValueError):
        make_predictor(model, Task("esp", 3))
    with pytest.raises(ValueError):
        fit_model("gru", machines, Task("esp", 4), cfg)


def test_short_test_range_rejected():
    s = synthetic_series("m", days=29, points_per_day=4, seed=0)
    with pytest.raises(ValueError):
        evaluate(truth_echo(Task("actual", 6), 8), [s], Task("actual", 6))
