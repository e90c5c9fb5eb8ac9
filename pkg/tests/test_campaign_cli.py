import csv
import json

import numpy as np
import pytest

from trajphd import cli
from trajphd.campaign import (
    CampaignResult,
    emit_csv,
    evaluate,
    run_monte_carlo,
    run_single,
    simulate,
    stream,
)
from trajphd.models import (
    BirthComponent,
    BirthModel,
    ClutterModel,
    MeasurementModel,
    MotionModel,
    TruthEntry,
    load_scenario,
    benchmark_scenario,
)
from trajphd.simulator import truth_from_json


def short_scenario(horizon=30):
    cfg = benchmark_scenario()
    spec = tuple(TruthEntry(e.birth, min(e.death, horizon), e.component) for e in cfg.ground_truth_spec)
    return cfg.replace(horizon=horizon, ground_truth_spec=spec)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_streams_are_independent_and_reproducible():
    a = stream(1, 2, 0).normal(size=3)
    assert np.array_equal(a, stream(1, 2, 0).normal(size=3))
    assert not np.array_equal(a, stream(1, 2, 1).normal(size=3))
    assert not np.array_equal(a, stream(1, 3, 0).normal(size=3))


def test_run_single_benchmark():
    res = run_single(benchmark_scenario(), 2, seed=3)
    assert res.cost.shape == (100,) and res.cardinality.shape == (100,)
    assert np.all((res.cost >= 0) & (res.cost <= 10))
    again = run_single(benchmark_scenario(), 2, seed=3)
    assert np.array_equal(res.cost, again.cost) and np.array_equal(res.cardinality, again.cardinality)


def test_noiseless_single_target_cost_vanishes():
    cfg = benchmark_scenario().replace(
        motion=MotionModel(np.eye(4), np.zeros((4, 4)), 0.99),
        measurement=MeasurementModel(np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]]), 1e-8 * np.eye(2), 1.0),
        clutter=ClutterModel(0.0, np.array([[0.0, 2000.0], [0.0, 2000.0]])),
        birth=BirthModel((BirthComponent(0.5, np.array([100.0, 0, 100.0, 0]), np.diag([4.0, 1e-6, 4.0, 1e-6])),)),
        ground_truth_spec=(TruthEntry(1, 20, component=0),),
        horizon=20, truth_mode="fixed",
    )
    res = run_single(cfg, "full", seed=0)
    assert np.all(res.cost < 1e-2)
    assert np.all(res.cardinality == 1)


def test_cardinality_identical_across_window_lengths():
    cfg = short_scenario()
    truth, scans = simulate(cfg, 5, 0)
    cards = [evaluate(cfg, L, truth, scans).cardinality for L in ("full", 1, 2, 5)]
    for c in cards[1:]:
        assert np.array_equal(c, cards[0])


def test_single_run_campaign_equals_run():
    cfg = short_scenario()
    res = run_monte_carlo(cfg, [1, 5], 1, 4)
    for li, L in enumerate([1, 5]):
        single = run_single(cfg, L, 4, run=0)
        assert np.array_equal(res.mean_cost(li), single.cost)
        assert np.array_equal(res.mean_cardinality(li), single.cardinality)
        assert res.time_averaged_cost(li) == pytest.approx(single.cost.mean(), rel=1e-15)


def test_runs_must_be_positive():
    with pytest.raises(ValueError):
        run_monte_carlo(short_scenario(), [1], 0, 0)


def test_pinned_truth_used_for_every_run():
    cfg = short_scenario()
    truth, _ = simulate(cfg, 0, 0)
    res = run_monte_carlo(cfg, [1], 2, 0, truth=truth)
    assert np.array_equal(res.runs[0][0].true_cardinality, res.runs[1][0].true_cardinality)


def test_workers_do_not_change_results(tmp_path):
    cfg = short_scenario(20)
    serial = run_monte_carlo(cfg, [1, 2], 3, 7)
    parallel = run_monte_carlo(cfg, [1, 2], 3, 7, workers=2)
    for li in range(2):
        assert np.array_equal(serial.mean_cost(li), parallel.mean_cost(li))


def test_csv_outputs(tmp_path):
    cfg = short_scenario(20)
    res = run_monte_carlo(cfg, [1, 2, 5, 10], 2, 1)
    paths = emit_csv(res, tmp_path)
    cost = read_csv(paths[0])
    assert cost[0] == ["scan", "1", "2", "5", "10"]
    assert len(cost) == 21
    vals = np.array(cost[1:], dtype=float)[:, 1:]
    assert np.all((vals >= 0) & (vals <= 10))
    assert read_csv(paths[1])[0] == ["scan", "mean_estimated", "mean_true"]
    summary = read_csv(paths[2])
    assert summary[0] == ["L", "time_averaged_cost", "mean_runtime_seconds"]
    assert [row[0] for row in summary[1:]] == ["1", "2", "5", "10"]


def test_csv_empty_results(tmp_path):
    paths = emit_csv(CampaignResult([1, 2], 10), tmp_path)
    assert [len(read_csv(p)) for p in paths] == [1, 1, 1]


def test_csv_deterministic(tmp_path):
    cfg = short_scenario(15)
    for name in ("a", "b"):
        emit_csv(run_monte_carlo(cfg, [1, "full"], 2, 3), tmp_path / name)
    for fname in ("cost_vs_time.csv", "cardinality_vs_time.csv"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()
    a, b = read_csv(tmp_path / "a" / "summary.csv"), read_csv(tmp_path / "b" / "summary.csv")
    assert [r[:2] for r in a] == [r[:2] for r in b]


# --- command line -----------------------------------------------------------------

def test_cli_scenario_and_vary(tmp_path):
    out = tmp_path / "s.json"
    assert cli.main(["scenario", "--vary", "p_D=0.99", "--vary", "sigma2=25", "--out", str(out)]) == 0
    cfg = load_scenario(out)
    assert cfg.measurement.detection_prob == 0.99
    np.testing.assert_array_equal(cfg.measurement.noise_cov, 25 * np.eye(2))


def test_cli_run_writes_csv(tmp_path, capsys):
    scen = tmp_path / "s.json"
    from trajphd.models import save_scenario
    save_scenario(short_scenario(12), scen)
    out = tmp_path / "res"
    code = cli.main(["run", "--scenario", str(scen), "--runs", "2", "--seed", "1", "--lscan", "1,full",
                     "--out", str(out), "--truth-mode", "fixed"])
    assert code == 0
    assert "L=1" in capsys.readouterr().out
    assert read_csv(out / "cost_vs_time.csv")[0] == ["scan", "1", "full"]
    assert len(read_csv(out / "summary.csv")) == 3


def test_cli_truth_export_and_pin(tmp_path):
    truth_path = tmp_path / "truth.json"
    assert cli.main(["truth", "--seed", "2", "--out", str(truth_path)]) == 0
    truth = truth_from_json(truth_path)
    assert [(t.birth, t.death) for t in truth] == [(1, 80), (5, 70), (10, 95)]
    assert json.loads(truth_path.read_text())["trajectories"][0]["birth"] == 1


@pytest.mark.parametrize("argv", [
    ["run", "--lscan", "0"],
    ["run", "--vary", "p_D"],
    ["run", "--vary", "nonsense=1"],
    ["run", "--vary", "p_D=1.5"],
    ["scenario", "--scenario", "/nonexistent/s.json", "--out", "x.json"],
])
def test_cli_bad_input_exit_code(argv, tmp_path, capsys):
    assert cli.main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_cli_failed_run_exit_code(tmp_path, monkeypatch):
    from trajphd import campaign

    def boom(*args, **kwargs):
        raise RuntimeError("numerical failure")

    monkeypatch.setattr(campaign, "run_monte_carlo", boom)
    assert cli.main(["run", "--runs", "1", "--out", str(tmp_path)]) == 1
