"""Poisson point processes on trajectory space with Gaussian-mixture PHDs.

Every integral over trajectory space reduces to weight sums and Gaussian
marginals because each mixture component has a fixed start scan and length.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Collection, Optional

import numpy as np

from .gm_tphd import TrajectoryComponent


@dataclass(frozen=True)
class TrajectorySample:
    start: int
    states: np.ndarray  # (length, n_x)

    def __post_init__(self):
        if self.states.shape[0] < 1:
            raise ValueError("a trajectory has at least one state")

    @property
    def length(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class GmTrajectoryPhd:
    components: tuple[TrajectoryComponent, ...] = ()

    def __post_init__(self):
        w = self.weights
        if not np.all(np.isfinite(w)):
            raise ValueError("non-finite weights")
        if np.any(w < 0):
            raise ValueError("negative weights")

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components], dtype=float)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())


def sample_cardinality(lam: float, rng: np.random.Generator) -> int:
    """Draw the number of trajectories from ``Poisson(lam)``."""
    if not lam >= 0:
        raise ValueError(f"Poisson rate must be nonnegative, got {lam}")
    return int(rng.poisson(lam))


def sample_set(phd: GmTrajectoryPhd, rng: np.random.Generator) -> list[TrajectorySample]:
    """Draw one set of trajectories from the Poisson process with this PHD.

    The count is Poisson with the total mass; each trajectory picks a
    component with probability proportional to its weight, which fixes its
    start and length, then draws the stacked states from that Gaussian.
    """
    w = phd.weights
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite weights")
    lam = float(w.sum())
    n = sample_cardinality(lam, rng)
    if n == 0:
        return []
    picks = rng.choice(len(w), size=n, p=w / lam)
    out = []
    for j in picks:
        comp = phd.components[j]
        x = rng.multivariate_normal(comp.mean, comp.cov, method="cholesky")
        out.append(TrajectorySample(comp.start, x.reshape(-1, comp.state_dim)))
    return out


def marginal_target_phd(phd: GmTrajectoryPhd, k: int) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """Gaussian-mixture PHD of the target states at scan `k`."""
    out = []
    for c in phd.components:
        if not c.start <= k <= c.end:
            continue
        n = c.state_dim
        b = k - c.start
        mean = c.mean[b * n:(b + 1) * n]
        cov = c.cov[b * n:(b + 1) * n, b * n:(b + 1) * n]
        out.append((c.weight, mean, cov))
    return out


def expected_count(phd: GmTrajectoryPhd, starts: Optional[Collection[int]] = None,
                   lengths: Optional[Collection[int]] = None) -> float:
    """Expected number of trajectories with start in `starts` and length in `lengths`.

    A missing set places no restriction on that coordinate.
    """
    total = 0.0
    for c in phd.components:
        if starts is not None and c.start not in starts:
            continue
        if lengths is not None and c.length not in lengths:
            continue
        total += c.weight
    return total
