"""Gaussian-mixture trajectory PHD filter with L-scan truncation.

Each mixture component is a Gaussian over a whole trajectory ``x^1..x^i``
that starts at scan ``start``.  Storage follows the L-scan structure: the
last ``w`` states keep a joint covariance (the *window*) and the earlier
states are independent, each with its own ``n_x x n_x`` block.  A dense
trajectory Gaussian is the special case where the window spans the whole
trajectory, which is what the unbounded (``lscan="full"``) filter keeps.

Only alive trajectories are tracked: components whose trajectory ends before
the current scan are dropped at prediction instead of being carried with a
``(1 - p_S)`` weight.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .models import BirthModel, ClutterModel, LScan, MeasurementModel, MotionModel, ScenarioConfig, clutter_density_many

log = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-9
_LOG_2PI = math.log(2.0 * math.pi)


class FilterError(RuntimeError):
    """Numerical failure inside the filter (singular innovation or covariance)."""


@dataclass(eq=False, slots=True)
class TrajectoryComponent:
    """Weighted Gaussian over a single trajectory.

    Parameters
    ----------
    weight : float
        Mixture weight.
    start : int
        Scan of the first state.
    window_mean, window_cov : ndarray
        Joint mean ``(w*n_x,)`` and covariance of the most recent ``w`` states,
        chronological.
    past_means, past_covs : ndarray
        ``(p, n_x)`` means and ``(p, n_x, n_x)`` covariances of the states
        before the window, mutually independent and independent of the
        window.
    """

    weight: float
    start: int
    window_mean: np.ndarray
    window_cov: np.ndarray
    past_means: np.ndarray
    past_covs: np.ndarray

    @classmethod
    def from_dense(cls, weight, start, mean, cov, state_dim: int) -> "TrajectoryComponent":
        mean = np.asarray(mean, dtype=float).reshape(-1)
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if mean.size % state_dim or mean.size == 0:
            raise ValueError(f"mean of size {mean.size} is not a whole number of {state_dim}-d states")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean size {mean.size}")
        return cls(
            float(weight),
            int(start),
            mean,
            cov,
            np.empty((0, state_dim)),
            np.empty((0, state_dim, state_dim)),
        )

    @property
    def state_dim(self) -> int:
        return self.past_means.shape[1]

    @property
    def window_length(self) -> int:
        return self.window_mean.size // self.state_dim

    @property
    def length(self) -> int:
        return self.past_means.shape[0] + self.window_length

    @property
    def end(self) -> int:
        return self.start + self.length - 1

    @property
    def mean(self) -> np.ndarray:
        """Stacked chronological mean, ``(length * n_x,)``."""
        return np.concatenate([self.past_means.reshape(-1), self.window_mean])

    @property
    def cov(self) -> np.ndarray:
        """Dense chronological covariance; zero cross-blocks outside the window."""
        n = self.state_dim
        p = self.past_means.shape[0]
        size = n * self.length
        out = np.zeros((size, size))
        for b in range(p):
            out[b * n:(b + 1) * n, b * n:(b + 1) * n] = self.past_covs[b]
        out[p * n:, p * n:] = self.window_cov
        return out

    def states(self) -> np.ndarray:
        """Mean decoded as a ``(length, n_x)`` state sequence."""
        return self.mean.reshape(-1, self.state_dim)

    def with_weight(self, weight: float) -> "TrajectoryComponent":
        return TrajectoryComponent(weight, self.start, self.window_mean, self.window_cov,
                                   self.past_means, self.past_covs)


@dataclass(frozen=True)
class TphdState:
    """Filter posterior at scan `time`: alive components only."""

    time: int = 0
    lscan: LScan = "full"
    components: tuple[TrajectoryComponent, ...] = ()

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components], dtype=float)

    @property
    def total_weight(self) -> float:
        return float(sum(c.weight for c in self.components))

    def __len__(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class TrajectoryEstimate:
    start: int
    states: np.ndarray  # (length, n_x)

    @property
    def end(self) -> int:
        return self.start + self.states.shape[0] - 1


@dataclass(frozen=True)
class TrajectoryEstimateSet:
    time: int
    estimates: tuple[TrajectoryEstimate, ...] = ()

    def __len__(self) -> int:
        return len(self.estimates)

    def __iter__(self) -> Iterator[TrajectoryEstimate]:
        return iter(self.estimates)


def current_state_marginal(component: TrajectoryComponent) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the last state of the trajectory."""
    n = component.state_dim
    return component.window_mean[-n:], component.window_cov[-n:, -n:]


def _symmetrize(P: np.ndarray, what: str) -> np.ndarray:
    asym = np.max(np.abs(P - P.T)) if P.size else 0.0
    P = 0.5 * (P + P.T)
    if asym > SYMMETRY_TOL:
        vals, vecs = np.linalg.eigh(P)
        if vals.min() < 0:
            log.warning("%s: asymmetry %.3g, clipping %d negative eigenvalues",
                        what, asym, int(np.sum(vals < 0)))
            P = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return P


def _birth_components(birth: BirthModel, k: int) -> list[TrajectoryComponent]:
    return [TrajectoryComponent.from_dense(b.weight, k, b.mean, b.cov, b.mean.size) for b in birth.components]


def predict(state: TphdState, motion: MotionModel, birth: BirthModel) -> TphdState:
    """Advance one scan: births first, then every alive trajectory extended by one state.

    The appended state is ``F x_last`` and its cross-covariance with the
    window is ``P[:, last] F^T``; older states are untouched.
    """
    F, Q, p_s = motion.transition_matrix, motion.process_noise, motion.survival_prob
    n = F.shape[0]
    k = state.time + 1
    out = _birth_components(birth, k)
    comps = state.components
    for c in comps:
        if c.state_dim != n:
            raise ValueError(f"component state dim {c.state_dim} != motion dim {n}")
    if comps:
        last = np.stack([c.window_cov[-n:, -n:] for c in comps])
        last_covs = _symmetrize_batch(F @ last @ F.T + Q, "predicted covariance")
    for c, last_cov in zip(comps, last_covs if comps else ()):
        m, P = c.window_mean, c.window_cov
        cross = P[:, -n:] @ F.T
        W = m.size
        cov = np.empty((W + n, W + n))
        cov[:W, :W] = P
        cov[:W, W:] = cross
        cov[W:, :W] = cross.T
        cov[W:, W:] = last_cov
        mean = np.concatenate([m, F @ m[-n:]])
        out.append(TrajectoryComponent(p_s * c.weight, c.start, mean, cov, c.past_means, c.past_covs))
    return TphdState(k, state.lscan, tuple(out))


def lscan_truncate(component: TrajectoryComponent, L: LScan, k: int) -> TrajectoryComponent:
    """Keep the joint covariance of the last `L` states, decorrelate the rest.

    States that leave the window keep their own marginal block; every
    cross-covariance involving them is dropped.  Mean and weight are
    unchanged.
    """
    if component.end != k:
        raise ValueError(f"component ends at scan {component.end}, not alive at {k}")
    if L == "full":
        return component
    w = component.window_length
    if w <= L:
        return component
    n = component.state_dim
    cut = (w - L) * n
    b = w - L
    idx = np.arange(b)
    blocks = component.window_cov[:cut, :cut].reshape(b, n, b, n)[idx, :, idx, :]
    return TrajectoryComponent(
        component.weight,
        component.start,
        component.window_mean[cut:],
        component.window_cov[cut:, cut:],
        np.concatenate([component.past_means, component.window_mean[:cut].reshape(-1, n)]),
        np.concatenate([component.past_covs, blocks]),
    )


def _truncate_all(state: TphdState) -> TphdState:
    if state.lscan == "full":
        return state
    comps = tuple(lscan_truncate(c, state.lscan, state.time) for c in state.components)
    return TphdState(state.time, state.lscan, comps)


def _kalman_batch(means: np.ndarray, covs: np.ndarray, H: np.ndarray, R: np.ndarray, Z: np.ndarray):
    """Kalman correction of a stack of equally sized windows against every measurement.

    Parameters
    ----------
    means : ndarray, shape (G, W)
    covs : ndarray, shape (G, W, W)

    Returns
    -------
    cov_upd : (G, W, W) updated covariances (shared by every measurement)
    log_q : (G, M) log-likelihood of each measurement
    means_upd : (G, M, W) updated means
    """
    n = H.shape[1]
    PHt = covs[:, :, -n:] @ H.T
    zbar = means[:, -n:] @ H.T
    S = H @ PHt[:, -n:, :] + R
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    try:
        chol = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise FilterError("singular innovation covariance") from None
    K = np.swapaxes(np.linalg.solve(S, np.swapaxes(PHt, 1, 2)), 1, 2)
    cov_upd = _symmetrize_batch(covs - K @ np.swapaxes(PHt, 1, 2), "updated covariance")
    diff = Z[None, :, :] - zbar[:, None, :]
    y = np.linalg.solve(chol, np.swapaxes(diff, 1, 2))
    log_det = np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    log_q = -0.5 * np.sum(y * y, axis=1) - log_det[:, None] - 0.5 * H.shape[0] * _LOG_2PI
    means_upd = means[:, None, :] + diff @ np.swapaxes(K, 1, 2)
    return cov_upd, log_q, means_upd


def _symmetrize_batch(P: np.ndarray, what: str) -> np.ndarray:
    Pt = np.swapaxes(P, -1, -2)
    asym = np.abs(P - Pt).max(axis=(-2, -1))
    out = 0.5 * (P + Pt)
    for g in np.flatnonzero(asym > SYMMETRY_TOL):
        out[g] = _symmetrize(P[g], what)
    return out


def _kalman_grouped(windows: Sequence[tuple[np.ndarray, np.ndarray]], H, R, Z):
    """Apply :func:`_kalman_batch` to windows grouped by size; per-item results."""
    by_size: dict[int, list[int]] = {}
    for j, (m, _) in enumerate(windows):
        by_size.setdefault(m.size, []).append(j)
    covs_out = [None] * len(windows)
    means_out = [None] * len(windows)
    log_q = np.empty((len(windows), Z.shape[0]))
    for idx in by_size.values():
        cov_upd, lq, means_upd = _kalman_batch(
            np.stack([windows[j][0] for j in idx]), np.stack([windows[j][1] for j in idx]), H, R, Z
        )
        log_q[idx] = lq
        for g, j in enumerate(idx):
            covs_out[j] = cov_upd[g]
            means_out[j] = means_upd[g]
    return covs_out, log_q, means_out


def detection_weights(log_q: np.ndarray, weights: np.ndarray, p_d: float, clutter_intensity: np.ndarray) -> np.ndarray:
    """Normalized detection weights ``w_j(z)`` from ``log q_j(z)``, shape ``(J, M)``.

    Computed in log space; a measurement with zero clutter intensity whose
    likelihoods all underflow gets zero weight everywhere.
    """
    with np.errstate(divide="ignore"):
        log_num = math.log(p_d) + np.log(weights)[:, None] + log_q if p_d > 0 else np.full_like(log_q, -np.inf)
        log_clutter = np.log(clutter_intensity)
    log_den = np.logaddexp(log_clutter, logsumexp(log_num, axis=0))
    with np.errstate(invalid="ignore"):
        out = np.exp(log_num - log_den)
    return np.where(np.isfinite(log_den), out, 0.0)


def update(state: TphdState, measurements, meas: MeasurementModel, clutter: ClutterModel) -> TphdState:
    """Measurement update of every alive component.

    Output order: the missed-detection copies of all components, then for
    each measurement in turn one detected copy per component.  Only the
    window is corrected; earlier states have zero cross-covariance with the
    current state so their gain rows vanish.
    """
    comps = state.components
    H, R, p_d = meas.observation_matrix, meas.noise_cov, meas.detection_prob
    Z = np.asarray(measurements, dtype=float).reshape(-1, H.shape[0])
    missed = [c.with_weight((1.0 - p_d) * c.weight) for c in comps]
    if not comps or Z.shape[0] == 0:
        return TphdState(state.time, state.lscan, tuple(missed))
    for c in comps:
        if c.state_dim != H.shape[1]:
            raise ValueError(f"component state dim {c.state_dim} != observation matrix columns {H.shape[1]}")

    covs, log_q, means = _kalman_grouped([(c.window_mean, c.window_cov) for c in comps], H, R, Z)
    weights = np.array([c.weight for c in comps])
    wz = detection_weights(log_q, weights, p_d, clutter.rate * clutter_density_many(Z, clutter)).tolist()

    out = missed
    for zi in range(Z.shape[0]):
        for j, c in enumerate(comps):
            out.append(TrajectoryComponent(wz[j][zi], c.start, means[j][zi], covs[j], c.past_means, c.past_covs))
    return TphdState(state.time, state.lscan, tuple(out))


def absorb(weights: np.ndarray, means: np.ndarray, covs: np.ndarray, gamma_p: float, gamma_a: float,
           j_max: int) -> list[tuple[int, float]]:
    """Pruning and absorption on current-state moments.

    Returns ``(index, absorbed weight)`` pairs in selection order, at most
    `j_max` of them.  Shared by the trajectory filter and the GMPHD baseline.
    """
    keep = np.flatnonzero(weights > gamma_p)
    if keep.size == 0:
        return []
    w = weights[keep]
    m = means[keep]
    try:
        inv = np.linalg.inv(covs[keep])
    except np.linalg.LinAlgError:
        bad = next(j for j in keep if np.linalg.matrix_rank(covs[j]) < covs.shape[-1])
        raise FilterError(f"singular current-state covariance in component {bad}") from None
    # close[a, b]: component b lies within gamma_a of a, in a's metric
    diff = m[None, :, :] - m[:, None, :]
    close = np.sum((diff @ inv) * diff, axis=-1) < gamma_a
    np.fill_diagonal(close, True)

    # visiting by descending weight (ties: lower index) is the same as
    # repeatedly taking the heaviest remaining component
    remaining = np.ones(keep.size, dtype=bool)
    picked: list[tuple[int, float]] = []
    for a in np.argsort(-w, kind="stable").tolist():
        if not remaining[a]:
            continue
        group = remaining & close[a]
        picked.append((int(keep[a]), float(w[group].sum())))
        remaining &= ~group
    if len(picked) > j_max:
        order = sorted(range(len(picked)), key=lambda i: -picked[i][1])[:j_max]
        picked = [picked[i] for i in sorted(order)]
    return picked


def prune_absorb(state: TphdState, gamma_p: float, gamma_a: float, j_max: int) -> TphdState:
    """Drop weights ``<= gamma_p``, absorb near duplicates into the heaviest, cap at `j_max`.

    The surviving component keeps its own trajectory; only its weight grows.
    """
    comps = [c for c in state.components if c.weight > gamma_p]
    if not comps:
        return TphdState(state.time, state.lscan, ())
    marg = [current_state_marginal(c) for c in comps]
    picked = absorb(
        np.array([c.weight for c in comps]),
        np.stack([m for m, _ in marg]),
        np.stack([P for _, P in marg]),
        gamma_p, gamma_a, j_max,
    )
    return TphdState(state.time, state.lscan, tuple(comps[j].with_weight(w) for j, w in picked))


def estimated_count(total_weight: float) -> int:
    """``round(total)`` with halves rounded away from zero."""
    return int(math.floor(total_weight + 0.5))


def estimate(state: TphdState) -> TrajectoryEstimateSet:
    """Report the ``round(sum w)`` heaviest trajectories (ties: lower index first)."""
    comps = state.components
    if not comps:
        return TrajectoryEstimateSet(state.time)
    w = state.weights
    n_hat = min(estimated_count(float(w.sum())), len(comps))
    order = np.argsort(-w, kind="stable")[:n_hat]
    return TrajectoryEstimateSet(
        state.time, tuple(TrajectoryEstimate(comps[j].start, comps[j].states()) for j in order)
    )


def step(state: TphdState, measurements, config: ScenarioConfig) -> tuple[TphdState, TrajectoryEstimateSet]:
    """One filter recursion: predict, L-scan truncate, update, estimate, prune."""
    predicted = _truncate_all(predict(state, config.motion, config.birth))
    return _update_estimate_prune(predicted, measurements, config)


def step_reference(state: TphdState, measurements, config: ScenarioConfig) -> tuple[TphdState, TrajectoryEstimateSet]:
    """:func:`step` written as the plain composition of the public operations."""
    predicted = _truncate_all(predict(state, config.motion, config.birth))
    updated = update(predicted, measurements, config.measurement, config.clutter)
    est = estimate(updated)
    pruned = prune_absorb(updated, config.prune_threshold, config.absorb_threshold, config.max_components)
    return pruned, est


def _update_estimate_prune(predicted: TphdState, measurements, config: ScenarioConfig):
    # Same result as update -> estimate -> prune_absorb, but only the
    # components that are reported or survive pruning are materialized.
    comps = predicted.components
    meas, clutter = config.measurement, config.clutter
    H, R, p_d = meas.observation_matrix, meas.noise_cov, meas.detection_prob
    Z = np.asarray(measurements, dtype=float).reshape(-1, H.shape[0])
    if not comps or Z.shape[0] == 0:
        updated = update(predicted, Z, meas, clutter)
        est = estimate(updated)
        return prune_absorb(updated, config.prune_threshold, config.absorb_threshold, config.max_components), est

    J, M = len(comps), Z.shape[0]
    n = H.shape[1]
    for c in comps:
        if c.state_dim != n:
            raise ValueError(f"component state dim {c.state_dim} != observation matrix columns {n}")
    covs, log_q, means = _kalman_grouped([(c.window_mean, c.window_cov) for c in comps], H, R, Z)
    prior = np.array([c.weight for c in comps])
    wz = detection_weights(log_q, prior, p_d, clutter.rate * clutter_density_many(Z, clutter))
    # output order: missed copies 0..J-1, then index J + zi*J + j
    weights = np.concatenate([(1.0 - p_d) * prior, wz.T.reshape(-1)])

    def build(p: int) -> TrajectoryComponent:
        j = p % J
        c = comps[j]
        if p < J:
            return c.with_weight(float(weights[p]))
        return TrajectoryComponent(float(weights[p]), c.start, means[j][p // J - 1], covs[j],
                                   c.past_means, c.past_covs)

    n_hat = min(estimated_count(float(weights.sum())), weights.size)
    chosen = np.argsort(-weights, kind="stable")[:n_hat]
    est = TrajectoryEstimateSet(
        predicted.time, tuple(TrajectoryEstimate(b.start, b.states()) for b in map(build, chosen.tolist()))
    )

    keep = np.flatnonzero(weights > config.prune_threshold)
    if keep.size == 0:
        return TphdState(predicted.time, predicted.lscan, ()), est
    j_of = keep % J
    z_of = keep // J - 1
    cur_means = np.stack([
        comps[j].window_mean[-n:] if zi < 0 else means[j][zi, -n:] for j, zi in zip(j_of.tolist(), z_of.tolist())
    ])
    cur_covs = np.stack([
        comps[j].window_cov[-n:, -n:] if zi < 0 else covs[j][-n:, -n:] for j, zi in zip(j_of.tolist(), z_of.tolist())
    ])
    picked = absorb(weights[keep], cur_means, cur_covs, config.prune_threshold, config.absorb_threshold,
                    config.max_components)
    survivors = tuple(build(int(keep[i])).with_weight(w) for i, w in picked)
    return TphdState(predicted.time, predicted.lscan, survivors), est


def initial_state(lscan: LScan = "full") -> TphdState:
    return TphdState(0, lscan, ())


def run_filter(scans: Sequence, config: ScenarioConfig, lscan: Optional[LScan] = None):
    """Run the filter over a list of per-scan measurement arrays.

    Yields ``(state, estimate)`` after each scan.
    """
    state = initial_state(config.lscan if lscan is None else lscan)
    for Z in scans:
        state, est = step(state, Z, config)
        yield state, est


# --- GMPHD baseline ---------------------------------------------------------

GaussianTerm = tuple[float, np.ndarray, np.ndarray]


def gmphd_predict(gm: Sequence[GaussianTerm], motion: MotionModel, birth: BirthModel) -> list[GaussianTerm]:
    F, Q, p_s = motion.transition_matrix, motion.process_noise, motion.survival_prob
    out = [(b.weight, b.mean, b.cov) for b in birth.components]
    for w, m, P in gm:
        out.append((p_s * w, F @ m, _symmetrize(F @ (P @ F.T) + Q, "predicted covariance")))
    return out


def gmphd_update(gm: Sequence[GaussianTerm], measurements, meas: MeasurementModel,
                 clutter: ClutterModel) -> list[GaussianTerm]:
    H, R, p_d = meas.observation_matrix, meas.noise_cov, meas.detection_prob
    Z = np.asarray(measurements, dtype=float).reshape(-1, H.shape[0])
    out = [((1.0 - p_d) * w, m, P) for w, m, P in gm]
    if not gm or Z.shape[0] == 0:
        return out
    covs, log_q, means = _kalman_grouped([(m, P) for _, m, P in gm], H, R, Z)
    wz = detection_weights(log_q, np.array([g[0] for g in gm]), p_d,
                           clutter.rate * clutter_density_many(Z, clutter)).tolist()
    for zi in range(Z.shape[0]):
        for j in range(len(gm)):
            out.append((wz[j][zi], means[j][zi], covs[j]))
    return out


def gmphd_prune(gm: Sequence[GaussianTerm], gamma_p: float, gamma_a: float, j_max: int) -> list[GaussianTerm]:
    gm = [g for g in gm if g[0] > gamma_p]
    if not gm:
        return []
    picked = absorb(np.array([g[0] for g in gm]), np.stack([g[1] for g in gm]), np.stack([g[2] for g in gm]),
                    gamma_p, gamma_a, j_max)
    return [(w, gm[j][1], gm[j][2]) for j, w in picked]


def gmphd_reference_step(gm: Sequence[GaussianTerm], measurements,
                         config: ScenarioConfig) -> tuple[list[GaussianTerm], list[GaussianTerm]]:
    """Target-state GMPHD recursion with the same pruning rule as the trajectory filter.

    Returns ``(pruned, updated)``; the estimated target count is
    ``estimated_count`` of the updated mixture's total weight.
    """
    predicted = gmphd_predict(gm, config.motion, config.birth)
    updated = gmphd_update(predicted, measurements, config.measurement, config.clutter)
    pruned = gmphd_prune(updated, config.prune_threshold, config.absorb_threshold, config.max_components)
    return pruned, updated
