"""Linear-Gaussian motion, measurement, clutter and birth models.

Also holds :class:`ScenarioConfig`, the bundle of models and run parameters
consumed by the simulator, the filter and the Monte Carlo runner, plus the
JSON round trip for scenario files.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

PSD_JITTER = 1e-10

LScan = Union[int, str]  # positive int or "full"


class ModelError(ValueError):
    """Raised when a model or scenario violates its invariants."""


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise ModelError(f"{name}: expected a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name}: non-finite entries")
    return arr


def _check_prob(p: float, name: str) -> None:
    if not 0.0 <= p <= 1.0:
        raise ModelError(f"{name}: probability out of range ({p})")


def check_psd(mat: np.ndarray, name: str, strict: bool = False) -> np.ndarray:
    """Symmetrize `mat` and verify it is PSD (PD if `strict`).

    The test is an attempted Cholesky factorization of ``M + jitter * I``;
    strict mode factorizes ``M`` itself.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ModelError(f"{name}: dimension mismatch, not square {mat.shape}")
    sym = 0.5 * (mat + mat.T)
    jitter = 0.0 if strict else PSD_JITTER
    try:
        np.linalg.cholesky(sym + jitter * np.eye(sym.shape[0]))
    except np.linalg.LinAlgError:
        kind = "non-PD" if strict else "non-PSD"
        raise ModelError(f"{name}: {kind} covariance") from None
    return sym


@dataclass(frozen=True)
class MotionModel:
    transition_matrix: np.ndarray
    process_noise: np.ndarray
    survival_prob: float

    @property
    def dim(self) -> int:
        return self.transition_matrix.shape[0]

    def validated(self) -> "MotionModel":
        F = _as_matrix(self.transition_matrix, "transition_matrix")
        Q = _as_matrix(self.process_noise, "process_noise")
        if F.shape[0] != F.shape[1]:
            raise ModelError(f"transition_matrix: dimension mismatch, not square {F.shape}")
        if Q.shape != F.shape:
            raise ModelError(f"process_noise: dimension mismatch {Q.shape} vs {F.shape}")
        Q = check_psd(Q, "process_noise")
        _check_prob(self.survival_prob, "survival_prob")
        return MotionModel(F, Q, float(self.survival_prob))


@dataclass(frozen=True)
class MeasurementModel:
    observation_matrix: np.ndarray
    noise_cov: np.ndarray
    detection_prob: float

    @property
    def dim(self) -> int:
        return self.observation_matrix.shape[0]

    def validated(self) -> "MeasurementModel":
        H = _as_matrix(self.observation_matrix, "observation_matrix")
        R = _as_matrix(self.noise_cov, "noise_cov")
        if R.shape != (H.shape[0], H.shape[0]):
            raise ModelError(f"noise_cov: dimension mismatch {R.shape} vs n_z={H.shape[0]}")
        R = check_psd(R, "noise_cov", strict=True)
        _check_prob(self.detection_prob, "detection_prob")
        return MeasurementModel(H, R, float(self.detection_prob))


@dataclass(frozen=True)
class ClutterModel:
    """Poisson clutter, uniform on an axis-aligned box.

    `region` has one ``(low, high)`` row per measurement dimension.
    """

    rate: float
    region: np.ndarray

    @property
    def volume(self) -> float:
        return float(np.prod(self.region[:, 1] - self.region[:, 0]))

    def validated(self) -> "ClutterModel":
        region = _as_matrix(self.region, "region")
        if region.shape[1] != 2:
            raise ModelError(f"region: expected (n_z, 2) bounds, got {region.shape}")
        if np.any(region[:, 1] <= region[:, 0]):
            raise ModelError("region: non-positive volume")
        if not self.rate >= 0:
            raise ModelError(f"clutter rate must be nonnegative ({self.rate})")
        return ClutterModel(float(self.rate), region)


@dataclass(frozen=True)
class BirthComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class BirthModel:
    components: tuple[BirthComponent, ...] = ()

    def validated(self, dim: int) -> "BirthModel":
        out = []
        for idx, comp in enumerate(self.components):
            if not comp.weight >= 0:
                raise ModelError(f"birth component {idx}: negative weight")
            mean = np.asarray(comp.mean, dtype=float).reshape(-1)
            if mean.shape != (dim,):
                raise ModelError(f"birth component {idx}: dimension mismatch in mean")
            cov = _as_matrix(comp.cov, f"birth component {idx} cov")
            if cov.shape != (dim, dim):
                raise ModelError(f"birth component {idx}: dimension mismatch in cov")
            out.append(BirthComponent(float(comp.weight), mean, check_psd(cov, f"birth component {idx}")))
        return BirthModel(tuple(out))


@dataclass(frozen=True)
class TruthEntry:
    """One ground-truth target: lifetime ``[birth, death]`` (inclusive scans).

    Exactly one of `component` (0-based index into the birth model) and
    `initial_state` is set.
    """

    birth: int
    death: int
    component: Optional[int] = None
    initial_state: Optional[np.ndarray] = None


TRUTH_MODES = ("fixed", "sampled")


@dataclass(frozen=True)
class ScenarioConfig:
    motion: MotionModel
    measurement: MeasurementModel
    clutter: ClutterModel
    birth: BirthModel
    horizon: int = 100
    lscan: LScan = "full"
    prune_threshold: float = 1e-4
    absorb_threshold: float = 0.1
    max_components: int = 30
    ground_truth_spec: tuple[TruthEntry, ...] = ()
    runs: int = 1
    base_seed: int = 0
    truth_mode: str = "sampled"

    @property
    def state_dim(self) -> int:
        return self.motion.dim

    @property
    def meas_dim(self) -> int:
        return self.measurement.dim

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def normalize_lscan(value: LScan) -> LScan:
    """Return ``"full"`` or a positive int; accepts numeric strings."""
    if isinstance(value, str):
        if value.strip().lower() == "full":
            return "full"
        value = int(value)
    if isinstance(value, bool) or int(value) != value or int(value) < 1:
        raise ModelError(f"lscan must be a positive integer or 'full' ({value!r})")
    return int(value)


def validate(config: ScenarioConfig) -> ScenarioConfig:
    """Check every model invariant and return the (symmetrized) config.

    Raises
    ------
    ModelError
        On dimension mismatch, non-PSD covariance, probability out of
        range, or a truth entry outside the horizon.
    """
    motion = config.motion.validated()
    n_x = motion.dim
    meas = config.measurement.validated()
    if meas.observation_matrix.shape[1] != n_x:
        raise ModelError(
            f"observation_matrix: dimension mismatch, {meas.observation_matrix.shape[1]} columns vs n_x={n_x}"
        )
    clutter = config.clutter.validated()
    if clutter.region.shape[0] != meas.dim:
        raise ModelError("region: dimension mismatch with measurement space")
    birth = config.birth.validated(n_x)

    if int(config.horizon) != config.horizon or config.horizon < 1:
        raise ModelError(f"horizon must be >= 1 ({config.horizon})")
    lscan = normalize_lscan(config.lscan)
    if config.prune_threshold < 0 or config.absorb_threshold < 0:
        raise ModelError("pruning/absorption thresholds must be nonnegative")
    if int(config.max_components) != config.max_components or config.max_components < 1:
        raise ModelError(f"max_components must be a positive integer ({config.max_components})")
    if config.runs < 1:
        raise ModelError(f"runs must be >= 1 ({config.runs})")
    if config.truth_mode not in TRUTH_MODES:
        raise ModelError(f"truth_mode must be one of {TRUTH_MODES}")

    truth = []
    for idx, entry in enumerate(config.ground_truth_spec):
        if not 1 <= entry.birth <= entry.death <= config.horizon:
            raise ModelError(
                f"truth entry {idx}: lifetime [{entry.birth}, {entry.death}] outside horizon {config.horizon}"
            )
        if (entry.component is None) == (entry.initial_state is None):
            raise ModelError(f"truth entry {idx}: give exactly one of component / initial_state")
        state = entry.initial_state
        if entry.component is not None:
            if not 0 <= entry.component < len(birth.components):
                raise ModelError(f"truth entry {idx}: no birth component {entry.component}")
        else:
            state = np.asarray(state, dtype=float).reshape(-1)
            if state.shape != (n_x,):
                raise ModelError(f"truth entry {idx}: dimension mismatch in initial_state")
        truth.append(TruthEntry(int(entry.birth), int(entry.death), entry.component, state))

    return dataclasses.replace(
        config,
        motion=motion,
        measurement=meas,
        clutter=clutter,
        birth=birth,
        horizon=int(config.horizon),
        lscan=lscan,
        max_components=int(config.max_components),
        ground_truth_spec=tuple(truth),
    )


def constant_velocity(tau: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """2-D nearly-constant-velocity ``(F, Q)`` for state ``[px, vx, py, vy]``."""
    F = np.kron(np.eye(2), np.array([[1.0, tau], [0.0, 1.0]]))
    Q = q * np.kron(np.eye(2), np.array([[tau**3 / 3, tau**2 / 2], [tau**2 / 2, tau]]))
    return F, Q


def benchmark_scenario(
    *,
    tau: float = 0.5,
    q: float = 3.24,
    sigma2: float = 16.0,
    p_s: float = 0.99,
    p_d: float = 0.9,
    clutter_rate: float = 50.0,
) -> ScenarioConfig:
    """The 2-D benchmark: three targets, three birth components, 100 scans."""
    F, Q = constant_velocity(tau, q)
    H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    birth_cov = np.diag([100.0, 100.0, 100.0, 100.0])
    birth_means = ([85.0, 0.0, 140.0, 0.0], [-5.0, 0.0, 220.0, 0.0], [7.0, 0.0, 50.0, 0.0])
    config = ScenarioConfig(
        motion=MotionModel(F, Q, p_s),
        measurement=MeasurementModel(H, sigma2 * np.eye(2), p_d),
        clutter=ClutterModel(clutter_rate, np.array([[0.0, 2000.0], [0.0, 2000.0]])),
        birth=BirthModel(tuple(BirthComponent(0.1, np.array(m), birth_cov.copy()) for m in birth_means)),
        horizon=100,
        lscan="full",
        prune_threshold=1e-4,
        absorb_threshold=0.1,
        max_components=30,
        ground_truth_spec=(
            TruthEntry(1, 80, component=0),
            TruthEntry(5, 70, component=1),
            TruthEntry(10, 95, component=2),
        ),
        runs=500,
        base_seed=0,
    )
    return validate(config)


# parameters accepted by `vary`; sigma2 rewrites R = sigma2 * I
VARY_KEYS = ("sigma2", "lambda_c", "p_D", "p_S")


def vary(config: ScenarioConfig, key: str, value: float) -> ScenarioConfig:
    """Return `config` with one benchmark parameter overridden."""
    if key == "sigma2":
        meas = dataclasses.replace(config.measurement, noise_cov=value * np.eye(config.meas_dim))
        config = config.replace(measurement=meas)
    elif key == "lambda_c":
        config = config.replace(clutter=dataclasses.replace(config.clutter, rate=value))
    elif key == "p_D":
        config = config.replace(measurement=dataclasses.replace(config.measurement, detection_prob=value))
    elif key == "p_S":
        config = config.replace(motion=dataclasses.replace(config.motion, survival_prob=value))
    else:
        raise ModelError(f"unknown parameter {key!r}; expected one of {VARY_KEYS}")
    return validate(config)


def clutter_density(z, clutter: ClutterModel) -> float:
    """Uniform clutter PDF: ``1 / volume`` inside the region, else 0."""
    z = np.asarray(z, dtype=float).reshape(-1)
    inside = np.all((z >= clutter.region[:, 0]) & (z <= clutter.region[:, 1]))
    return 1.0 / clutter.volume if inside else 0.0


def clutter_density_many(Z: np.ndarray, clutter: ClutterModel) -> np.ndarray:
    """Vectorized :func:`clutter_density` over the rows of `Z`."""
    Z = np.asarray(Z, dtype=float).reshape(-1, clutter.region.shape[0])
    inside = np.all((Z >= clutter.region[:, 0]) & (Z <= clutter.region[:, 1]), axis=1)
    return np.where(inside, 1.0 / clutter.volume, 0.0)


# --- JSON -----------------------------------------------------------------


def config_to_dict(config: ScenarioConfig) -> dict:
    truth = []
    for e in config.ground_truth_spec:
        item = {"birth": e.birth, "death": e.death}
        if e.component is not None:
            item["component"] = e.component
        else:
            item["initial_state"] = np.asarray(e.initial_state).tolist()
        truth.append(item)
    return {
        "motion": {
            "transition_matrix": config.motion.transition_matrix.tolist(),
            "process_noise": config.motion.process_noise.tolist(),
            "survival_prob": config.motion.survival_prob,
        },
        "measurement": {
            "observation_matrix": config.measurement.observation_matrix.tolist(),
            "noise_cov": config.measurement.noise_cov.tolist(),
            "detection_prob": config.measurement.detection_prob,
        },
        "clutter": {"rate": config.clutter.rate, "region": config.clutter.region.tolist()},
        "birth": {
            "components": [
                {"weight": c.weight, "mean": c.mean.tolist(), "cov": c.cov.tolist()}
                for c in config.birth.components
            ]
        },
        "horizon": config.horizon,
        "lscan": config.lscan,
        "prune_threshold": config.prune_threshold,
        "absorb_threshold": config.absorb_threshold,
        "max_components": config.max_components,
        "ground_truth_spec": truth,
        "runs": config.runs,
        "base_seed": config.base_seed,
        "truth_mode": config.truth_mode,
    }


def config_from_dict(data: dict) -> ScenarioConfig:
    try:
        m, h, c = data["motion"], data["measurement"], data["clutter"]
        birth = BirthModel(
            tuple(
                BirthComponent(b["weight"], np.asarray(b["mean"], float), np.asarray(b["cov"], float))
                for b in data["birth"]["components"]
            )
        )
        truth = tuple(
            TruthEntry(
                e["birth"],
                e["death"],
                e.get("component"),
                None if e.get("initial_state") is None else np.asarray(e["initial_state"], float),
            )
            for e in data.get("ground_truth_spec", [])
        )
        config = ScenarioConfig(
            motion=MotionModel(np.asarray(m["transition_matrix"], float), np.asarray(m["process_noise"], float),
                               m["survival_prob"]),
            measurement=MeasurementModel(np.asarray(h["observation_matrix"], float), np.asarray(h["noise_cov"], float),
                                         h["detection_prob"]),
            clutter=ClutterModel(c["rate"], np.asarray(c["region"], float)),
            birth=birth,
            horizon=data.get("horizon", 100),
            lscan=data.get("lscan", "full"),
            prune_threshold=data.get("prune_threshold", 1e-4),
            absorb_threshold=data.get("absorb_threshold", 0.1),
            max_components=data.get("max_components", 30),
            ground_truth_spec=truth,
            runs=data.get("runs", 1),
            base_seed=data.get("base_seed", 0),
            truth_mode=data.get("truth_mode", "sampled"),
        )
    except KeyError as exc:
        raise ModelError(f"scenario file missing field {exc}") from None
    return validate(config)


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_scenario(config: ScenarioConfig, path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2)
