"""OSPA distance and the time-averaged trajectory cost."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class OspaParams:
    """Cutoff `c`, order `p`, and an optional projection applied before distances.

    `projection` maps a state to the coordinates the Euclidean base distance
    is computed on, e.g. the observation matrix to compare positions only.
    """

    cutoff: float = 10.0
    order: float = 2.0
    projection: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")
        if not self.order >= 1:
            raise ValueError("order must be >= 1")

    def project(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        return states if self.projection is None else states @ self.projection.T


def tau_at_time(trajectories: Iterable, k: int) -> np.ndarray:
    """Stack the state at scan `k` of every trajectory that exists at `k`.

    Trajectories are anything with ``start`` and ``states`` (``(i, n_x)``).
    Returns an ``(m, n_x)`` array; ``(0, 0)`` when nothing is present and no
    dimension can be inferred.
    """
    found = []
    n_x = 0
    for traj in trajectories:
        states = np.asarray(traj.states)
        n_x = states.shape[1]
        idx = k - traj.start
        if 0 <= idx < states.shape[0]:
            found.append(states[idx])
    if not found:
        return np.empty((0, n_x))
    return np.vstack(found)


def optimal_assignment(cost) -> tuple[list[tuple[int, int]], float]:
    """Minimum-cost matching of ``min(n, m)`` rows and columns.

    Returns 0-based ``(row, col)`` pairs sorted by row and the total cost.
    """
    cost = np.atleast_2d(np.asarray(cost, dtype=float))
    if cost.size == 0:
        return [], 0.0
    rows, cols = linear_sum_assignment(cost)
    pairs = list(zip(rows.tolist(), cols.tolist()))
    return pairs, float(cost[rows, cols].sum())


def _pairwise(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=-1))


def ospa(X, Y, params: OspaParams = OspaParams()) -> float:
    """OSPA distance between two finite point sets (rows of `X` and `Y`)."""
    c, p = params.cutoff, params.order
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = 0 if X.size == 0 else X.shape[0]
    m = 0 if Y.size == 0 else Y.shape[0]
    if n == 0 and m == 0:
        return 0.0
    if n == 0 or m == 0:
        return float(c)
    if n > m:
        X, Y, n, m = Y, X, m, n
    D = np.minimum(_pairwise(params.project(X), params.project(Y)), c) ** p
    _, total = optimal_assignment(D)
    return float(((total + c**p * (m - n)) / m) ** (1.0 / p))


@lru_cache(maxsize=None)
def _permutations(size: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(size))), dtype=np.intp).reshape(-1, size)


_BRUTE_FORCE_MAX = 6


def _padded_positions(trajectories: Sequence, k: int, params: OspaParams):
    """``(k, n, d)`` projected states at scans 1..k and the presence mask."""
    n = len(trajectories)
    pos = None
    present = np.zeros((k, n), dtype=bool)
    for a, traj in enumerate(trajectories):
        states = params.project(np.asarray(traj.states))
        if pos is None:
            pos = np.zeros((k, n, states.shape[1]))
        lo = max(traj.start, 1)
        hi = min(traj.start + states.shape[0] - 1, k)
        if lo > hi:
            continue
        pos[lo - 1:hi, a] = states[lo - traj.start:hi - traj.start + 1]
        present[lo - 1:hi, a] = True
    return pos, present


def ospa_over_time(truth: Sequence, estimates: Sequence, k: int, params: OspaParams = OspaParams()) -> np.ndarray:
    """OSPA between ``tau^j(truth)`` and ``tau^j(estimates)`` for every j in 1..k.

    Both sets are padded to a common size N with absent slots: a present to
    absent pairing costs ``c^p`` and absent to absent costs 0, so the
    minimum over full permutations equals the OSPA matching plus the
    cardinality penalty.  Small N is solved by enumerating permutations for
    all scans at once.
    """
    c, p = params.cutoff, params.order
    truth, estimates = list(truth), list(estimates)
    A, B = len(truth), len(estimates)
    if A == 0 and B == 0:
        return np.zeros(k)
    N = max(A, B)
    cp = c**p
    pos_t, pres_t = _padded_positions(truth, k, params)
    pos_e, pres_e = _padded_positions(estimates, k, params)
    cost = np.zeros((k, N, N))
    pt = np.zeros((k, N), dtype=bool)
    pe = np.zeros((k, N), dtype=bool)
    pt[:, :A] = pres_t
    pe[:, :B] = pres_e
    one_side = pt[:, :, None] ^ pe[:, None, :]
    cost[one_side] = cp
    if A and B:
        d = np.sqrt(np.sum((pos_t[:, :, None, :] - pos_e[:, None, :, :]) ** 2, axis=-1))
        both = pres_t[:, :, None] & pres_e[:, None, :]
        cost[:, :A, :B] = np.where(both, np.minimum(d, c) ** p, cost[:, :A, :B])
    if N <= _BRUTE_FORCE_MAX:
        perms = _permutations(N)
        totals = cost[:, np.arange(N)[None, :], perms].sum(axis=-1).min(axis=1)
    else:
        totals = np.array([optimal_assignment(cost[j])[1] for j in range(k)])
    size = np.maximum(pt.sum(axis=1), pe.sum(axis=1))
    out = np.zeros(k)
    nz = size > 0
    out[nz] = (totals[nz] / size[nz]) ** (1.0 / p)
    return out


def trajectory_cost(truth_alive: Sequence, estimates: Sequence, k: int, params: OspaParams = OspaParams()) -> float:
    """Mean over scans 1..k of the OSPA between the alive true and estimated trajectories."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return float(ospa_over_time(truth_alive, estimates, k, params).mean())
