"""Single runs and Monte Carlo campaigns over L-scan window lengths.

Seeding: every run draws from ``SeedSequence([base_seed, run, tag])`` with
one tag per random purpose (truth, measurements).  The streams depend only
on ``(base_seed, run)``, so all window lengths within a run see the same
truth and measurements, and results do not depend on the worker count.
"""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import gm_tphd
from .metrics import OspaParams, ospa_over_time
from .models import LScan, ScenarioConfig, normalize_lscan, validate
from .simulator import alive_set, generate_scans, generate_truth

log = logging.getLogger(__name__)

TRUTH_TAG = 0
SCAN_TAG = 1


def stream(base_seed: int, run: int, tag: int) -> np.random.Generator:
    """Independent generator for one (run, purpose) pair."""
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), int(run), int(tag)]))


@dataclass
class RunResult:
    run: int
    lscan: LScan
    cost: np.ndarray  # per-scan trajectory cost, length horizon
    cardinality: np.ndarray  # per-scan estimated number of alive trajectories
    true_cardinality: np.ndarray
    seconds: float

    @property
    def mean_cost(self) -> float:
        return float(self.cost.mean())


def simulate(config: ScenarioConfig, base_seed: int, run: int, truth=None):
    """Truth and per-scan measurements for one run."""
    if truth is None:
        truth = generate_truth(config, stream(base_seed, run, TRUTH_TAG), config.truth_mode)
    scans = generate_scans(truth, config, stream(base_seed, run, SCAN_TAG))
    return truth, scans


def ospa_params(config: ScenarioConfig, cutoff: float = 10.0, order: float = 2.0) -> OspaParams:
    return OspaParams(cutoff, order, config.measurement.observation_matrix)


def evaluate(config: ScenarioConfig, lscan: LScan, truth, scans, run: int = 0,
             params: Optional[OspaParams] = None) -> RunResult:
    """Filter the given scans and score every scan against the alive truth."""
    params = params or ospa_params(config)
    horizon = len(scans)
    cost = np.zeros(horizon)
    card = np.zeros(horizon, dtype=int)
    true_card = np.zeros(horizon, dtype=int)
    t0 = time.perf_counter()
    state = gm_tphd.initial_state(lscan)
    for idx, scan in enumerate(scans):
        k = idx + 1
        try:
            state, est = gm_tphd.step(state, scan.points, config)
        except gm_tphd.FilterError as exc:
            raise gm_tphd.FilterError(f"run {run}, L={lscan}, scan {k}: {exc}") from exc
        alive = alive_set(truth, k)
        cost[idx] = ospa_over_time(alive, est.estimates, k, params).mean()
        card[idx] = len(est)
        true_card[idx] = len(alive)
    return RunResult(run, lscan, cost, card, true_card, time.perf_counter() - t0)


def run_single(config: ScenarioConfig, lscan: LScan, seed: int, run: int = 0) -> RunResult:
    """Simulate run `run` of seed `seed` and filter it with window `lscan`."""
    config = validate(config)
    truth, scans = simulate(config, seed, run)
    return evaluate(config, normalize_lscan(lscan), truth, scans, run)


def _run_all_l(args) -> list[RunResult]:
    config, lscans, base_seed, run, truth = args
    truth, scans = simulate(config, base_seed, run, truth)
    return [evaluate(config, L, truth, scans, run) for L in lscans]


@dataclass
class CampaignResult:
    lscans: list
    horizon: int
    runs: list[list[RunResult]] = field(default_factory=list)  # runs[r][l]

    def _stack(self, attr: str, li: int) -> np.ndarray:
        return np.array([getattr(r[li], attr) for r in self.runs], dtype=float).reshape(-1, self.horizon)

    def mean_cost(self, li: int) -> np.ndarray:
        """Per-scan cost averaged over runs."""
        return self._stack("cost", li).mean(axis=0)

    def mean_cardinality(self, li: int = 0) -> np.ndarray:
        return self._stack("cardinality", li).mean(axis=0)

    def mean_true_cardinality(self) -> np.ndarray:
        return self._stack("true_cardinality", 0).mean(axis=0)

    def time_averaged_cost(self, li: int) -> float:
        return float(self.mean_cost(li).mean())

    def mean_runtime(self, li: int) -> float:
        return float(np.mean([r[li].seconds for r in self.runs]))

    def summary(self) -> dict:
        return {L: self.time_averaged_cost(i) for i, L in enumerate(self.lscans)}


def run_monte_carlo(config: ScenarioConfig, lscans: Sequence[LScan], runs: int, base_seed: int,
                    workers: int = 1, truth=None, progress=None) -> CampaignResult:
    """Run `runs` independent runs, each filtered once per window length.

    `truth`, when given, pins the ground truth for every run; otherwise it is
    re-simulated per run.  Results are ordered by run index regardless of
    `workers`.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    config = validate(config)
    lscans = [normalize_lscan(L) for L in lscans]
    jobs = [(config, lscans, base_seed, r, truth) for r in range(runs)]
    result = CampaignResult(lscans, config.horizon)
    if workers <= 1:
        for done, job in enumerate(jobs, 1):
            result.runs.append(_run_all_l(job))
            if progress:
                progress(done, runs)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for done, res in enumerate(pool.map(_run_all_l, jobs, chunksize=max(1, runs // (4 * workers))), 1):
                result.runs.append(res)
                if progress:
                    progress(done, runs)
    return result


def emit_csv(result: CampaignResult, out: Union[str, Path]) -> list[Path]:
    """Write cost_vs_time.csv, cardinality_vs_time.csv and summary.csv into `out`."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "cost_vs_time.csv", out / "cardinality_vs_time.csv", out / "summary.csv"]
    have = bool(result.runs)

    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scan"] + [str(L) for L in result.lscans])
        if have:
            cols = [result.mean_cost(i) for i in range(len(result.lscans))]
            for k in range(result.horizon):
                w.writerow([k + 1] + [repr(float(c[k])) for c in cols])

    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scan", "mean_estimated", "mean_true"])
        if have:
            est, true = result.mean_cardinality(0), result.mean_true_cardinality()
            for k in range(result.horizon):
                w.writerow([k + 1, repr(float(est[k])), repr(float(true[k]))])

    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L", "time_averaged_cost", "mean_runtime_seconds"])
        if have:
            for i, L in enumerate(result.lscans):
                w.writerow([L, repr(result.time_averaged_cost(i)), repr(result.mean_runtime(i))])
    return paths
