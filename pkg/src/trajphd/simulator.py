"""Ground truth and measurement generation for linear-Gaussian scenarios."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .models import ClutterModel, MeasurementModel, ScenarioConfig, TRUTH_MODES


@dataclass(frozen=True)
class GroundTruthTrajectory:
    birth: int
    death: int
    states: np.ndarray  # (death - birth + 1, n_x)

    def __post_init__(self):
        if self.birth > self.death:
            raise ValueError(f"birth {self.birth} after death {self.death}")
        if self.states.shape[0] != self.death - self.birth + 1:
            raise ValueError("states length does not match lifetime")

    @property
    def start(self) -> int:
        return self.birth

    def alive_at(self, k: int) -> bool:
        return self.birth <= k <= self.death

    def state_at(self, k: int) -> np.ndarray:
        return self.states[k - self.birth]


@dataclass(frozen=True)
class ScanMeasurements:
    scan: int
    points: np.ndarray  # (count, n_z)

    def __len__(self) -> int:
        return self.points.shape[0]


def generate_truth(config: ScenarioConfig, rng: np.random.Generator, mode: str = "sampled") -> list[GroundTruthTrajectory]:
    """Simulate the configured targets.

    In ``"fixed"`` mode each target starts at its birth-component mean, in
    ``"sampled"`` mode at a draw from that component; explicit initial
    states are used as given.  Subsequent states follow ``N(F x, Q)``.
    """
    if mode not in TRUTH_MODES:
        raise ValueError(f"unknown truth mode {mode!r}")
    F, Q = config.motion.transition_matrix, config.motion.process_noise
    n = F.shape[0]
    births = config.birth.components
    out = []
    for entry in config.ground_truth_spec:
        if entry.component is not None:
            if not 0 <= entry.component < len(births):
                raise ValueError(f"truth entry references missing birth component {entry.component}")
            comp = births[entry.component]
            x = comp.mean.copy() if mode == "fixed" else rng.multivariate_normal(comp.mean, comp.cov)
        else:
            x = np.asarray(entry.initial_state, dtype=float).copy()
        steps = entry.death - entry.birth
        noise = rng.multivariate_normal(np.zeros(n), Q, size=steps, method="eigh") if steps else np.empty((0, n))
        states = np.empty((steps + 1, n))
        states[0] = x
        for s in range(steps):
            states[s + 1] = F @ states[s] + noise[s]
        out.append(GroundTruthTrajectory(entry.birth, entry.death, states))
    return out


def sample_clutter(clutter: ClutterModel, rng: np.random.Generator) -> np.ndarray:
    count = rng.poisson(clutter.rate)
    low, high = clutter.region[:, 0], clutter.region[:, 1]
    return rng.uniform(low, high, size=(count, low.size))


def generate_scan(truth: Sequence[GroundTruthTrajectory], k: int, meas: MeasurementModel, clutter: ClutterModel,
                  rng: np.random.Generator) -> ScanMeasurements:
    """Detections of the targets alive at `k` plus Poisson clutter, shuffled."""
    H, R, p_d = meas.observation_matrix, meas.noise_cov, meas.detection_prob
    n_z = H.shape[0]
    detections = []
    for traj in truth:
        if traj.alive_at(k) and rng.random() < p_d:
            detections.append(rng.multivariate_normal(H @ traj.state_at(k), R))
    points = np.vstack([np.reshape(detections, (-1, n_z)), sample_clutter(clutter, rng)])
    rng.shuffle(points, axis=0)
    return ScanMeasurements(k, points)


def generate_scans(truth, config: ScenarioConfig, rng: np.random.Generator) -> list[ScanMeasurements]:
    return [generate_scan(truth, k, config.measurement, config.clutter, rng) for k in range(1, config.horizon + 1)]


def alive_set(truth: Sequence[GroundTruthTrajectory], k: int) -> list[GroundTruthTrajectory]:
    """Trajectories alive at `k`, cut to their states up to and including `k`."""
    return [
        GroundTruthTrajectory(t.birth, k, t.states[: k - t.birth + 1])
        for t in truth
        if t.alive_at(k)
    ]


def truth_to_json(truth: Sequence[GroundTruthTrajectory], path: Union[str, Path]) -> None:
    payload = [
        {"birth": t.birth, "death": t.death, "states": t.states.tolist()}
        for t in truth
    ]
    with open(path, "w") as fh:
        json.dump({"trajectories": payload}, fh, indent=1)


def truth_from_json(path: Union[str, Path]) -> list[GroundTruthTrajectory]:
    with open(path) as fh:
        data = json.load(fh)
    return [
        GroundTruthTrajectory(int(t["birth"]), int(t["death"]), np.asarray(t["states"], dtype=float))
        for t in data["trajectories"]
    ]
