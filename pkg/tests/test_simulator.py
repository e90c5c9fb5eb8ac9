import numpy as np
import pytest
from scipy import stats

from trajphd.models import (
    BirthComponent,
    BirthModel,
    ClutterModel,
    MeasurementModel,
    MotionModel,
    TruthEntry,
    constant_velocity,
    benchmark_scenario,
)
from trajphd.simulator import (
    GroundTruthTrajectory,
    alive_set,
    generate_scan,
    generate_scans,
    generate_truth,
    sample_clutter,
    truth_from_json,
    truth_to_json,
)


@pytest.fixture(scope="module")
def scenario():
    return benchmark_scenario()


def single_target(p_d, rate=0.0, R=1.0):
    truth = [GroundTruthTrajectory(1, 3, np.array([[5.0, 0, 5.0, 0]] * 3))]
    meas = MeasurementModel(np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]]), R * np.eye(2), p_d)
    clutter = ClutterModel(rate, np.array([[0.0, 10.0], [0.0, 10.0]]))
    return truth, meas, clutter


def test_benchmark_truth_lifetimes(scenario):
    truth = generate_truth(scenario, np.random.default_rng(0), "fixed")
    assert [(t.birth, t.death) for t in truth] == [(1, 80), (5, 70), (10, 95)]
    for t, b in zip(truth, scenario.birth.components):
        np.testing.assert_array_equal(t.states[0], b.mean)
        assert t.states.shape == (t.death - t.birth + 1, 4)


def test_sampled_mode_draws_initial_state(scenario):
    truth = generate_truth(scenario, np.random.default_rng(0), "sampled")
    assert [(t.birth, t.death) for t in truth] == [(1, 80), (5, 70), (10, 95)]
    assert not np.array_equal(truth[0].states[0], scenario.birth.components[0].mean)


def test_unknown_mode(scenario):
    with pytest.raises(ValueError):
        generate_truth(scenario, np.random.default_rng(0), "exact")


def test_noiseless_identity_dynamics(scenario):
    config = scenario.replace(motion=MotionModel(np.eye(4), np.zeros((4, 4)), 0.99))
    for t, b in zip(generate_truth(config, np.random.default_rng(1), "fixed"), scenario.birth.components):
        np.testing.assert_array_equal(t.states, np.tile(b.mean, (t.states.shape[0], 1)))


def test_increment_covariance_matches_process_noise(scenario):
    F, Q = constant_velocity(1.0, 2.0)
    config = scenario.replace(
        motion=MotionModel(F, Q, 0.99), horizon=10_001,
        ground_truth_spec=(TruthEntry(1, 10_001, initial_state=np.zeros(4)),),
    )
    (t,) = generate_truth(config, np.random.default_rng(2), "fixed")
    inc = t.states[1:] - t.states[:-1] @ F.T
    emp = np.cov(inc.T)
    assert np.linalg.norm(emp - Q) / np.linalg.norm(Q) < 0.05


def test_missing_birth_component(scenario):
    config = scenario.replace(ground_truth_spec=(TruthEntry(1, 5, component=7),))
    with pytest.raises(ValueError, match="missing birth component"):
        generate_truth(config, np.random.default_rng(0))


def test_generate_truth_reproducible(scenario):
    for mode in ("fixed", "sampled"):
        a = generate_truth(scenario, np.random.default_rng(11), mode)
        b = generate_truth(scenario, np.random.default_rng(11), mode)
        for x, y in zip(a, b):
            assert np.array_equal(x.states, y.states)


def test_certain_detection_single_point():
    truth, meas, clutter = single_target(1.0)
    scan = generate_scan(truth, 2, meas, clutter, np.random.default_rng(0))
    assert len(scan) == 1 and scan.scan == 2


def test_no_detection_no_clutter_empty():
    truth, meas, clutter = single_target(0.0)
    scan = generate_scan(truth, 2, meas, clutter, np.random.default_rng(0))
    assert scan.points.shape == (0, 2)


def test_dead_target_not_detected():
    truth, meas, clutter = single_target(1.0)
    assert len(generate_scan(truth, 4, meas, clutter, np.random.default_rng(0))) == 0


def test_detection_rate():
    truth, meas, clutter = single_target(0.9)
    rng = np.random.default_rng(3)
    N = 10_000
    hits = sum(len(generate_scan(truth, 1, meas, clutter, rng)) for _ in range(N))
    assert abs(hits / N - 0.9) < 3 * np.sqrt(0.9 * 0.1 / N)


def test_scan_order_is_shuffled():
    truth, meas, clutter = single_target(1.0, rate=4.0, R=1e-6)
    rng = np.random.default_rng(4)
    positions = set()
    for _ in range(200):
        pts = generate_scan(truth, 1, meas, clutter, rng).points
        idx = np.flatnonzero(np.all(np.abs(pts - 5.0) < 1e-2, axis=1))
        if len(pts) > 1 and idx.size == 1:
            positions.add(int(idx[0]))
    assert len(positions) > 1


def test_clutter_count(scenario):
    rng = np.random.default_rng(5)
    counts = np.array([len(sample_clutter(scenario.clutter, rng)) for _ in range(10_000)])
    assert abs(counts.mean() - 50) < 3 * np.sqrt(50 / 10_000)


def test_clutter_uniform_on_region(scenario):
    rng = np.random.default_rng(6)
    pts = np.vstack([sample_clutter(scenario.clutter, rng) for _ in range(2000)])
    assert np.all((pts >= 0) & (pts <= 2000))
    cells = (pts[:, 0] >= 1000).astype(int) * 2 + (pts[:, 1] >= 1000).astype(int)
    observed = np.bincount(cells, minlength=4)
    assert stats.chisquare(observed).pvalue > 0.001


def test_generate_scans_covers_horizon(scenario):
    truth = generate_truth(scenario, np.random.default_rng(0))
    scans = generate_scans(truth, scenario, np.random.default_rng(1))
    assert [s.scan for s in scans] == list(range(1, 101))
    assert all(np.isfinite(s.points).all() for s in scans)


def test_alive_set(scenario):
    truth = generate_truth(scenario, np.random.default_rng(0), "fixed")
    (only,) = alive_set(truth, 90)
    assert (only.birth, only.death) == (10, 90)
    np.testing.assert_array_equal(only.states, truth[2].states[:81])
    assert alive_set(truth, 0) == []
    at_death = alive_set(truth, 70)
    assert len(at_death) == 3
    assert np.array_equal(at_death[1].states, truth[1].states)


def test_truth_trajectory_invariants():
    with pytest.raises(ValueError):
        GroundTruthTrajectory(5, 3, np.zeros((0, 4)))
    with pytest.raises(ValueError):
        GroundTruthTrajectory(1, 3, np.zeros((2, 4)))


def test_truth_json_roundtrip(tmp_path, scenario):
    truth = generate_truth(scenario, np.random.default_rng(9))
    path = tmp_path / "truth.json"
    truth_to_json(truth, path)
    back = truth_from_json(path)
    assert [(t.birth, t.death) for t in back] == [(t.birth, t.death) for t in truth]
    for a, b in zip(truth, back):
        assert np.array_equal(a.states, b.states)


def test_birth_model_unused_by_explicit_initial_state(scenario):
    config = scenario.replace(
        birth=BirthModel((BirthComponent(0.1, np.zeros(4), np.eye(4)),)),
        ground_truth_spec=(TruthEntry(2, 4, initial_state=np.array([1.0, 2.0, 3.0, 4.0])),),
    )
    (t,) = generate_truth(config, np.random.default_rng(0))
    np.testing.assert_array_equal(t.states[0], [1.0, 2.0, 3.0, 4.0])
