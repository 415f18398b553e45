"""Scenario configuration, ground-truth/measurement simulation, serialization.

Measurement sets are stored as ordered lists purely for serialization;
downstream code must not depend on the order of elements within a scan.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError
from .gaussians import GaussianDensity, GaussianMixture, LinearMotionModel, make_cv_model
from .models import BirthModel, ClutterModel, MeasurementModel, make_position_measurement
from .trajectory import Trajectory


@dataclass(frozen=True)
class GroundTruth:
    trajectories: tuple[Trajectory, ...]
    k_max: int

    def __post_init__(self):
        for tr in self.trajectories:
            if tr.last_time > self.k_max:
                raise ContractError(
                    f"trajectory ending at {tr.last_time} exceeds horizon {self.k_max}"
                )
        object.__setattr__(self, "trajectories", tuple(self.trajectories))


@dataclass(frozen=True)
class ScenarioConfig:
    k_max: int
    motion: LinearMotionModel
    measurement: MeasurementModel
    clutter: ClutterModel
    birth: BirthModel
    init_ppp: GaussianMixture
    births: tuple[int, ...]
    deaths: tuple[int, ...]
    init_means: tuple[np.ndarray, ...]
    init_cov: np.ndarray
    seed: int


@dataclass(frozen=True)
class Scenario:
    truth: GroundTruth
    measurements: list  # k_max lists of (n_z,) arrays
    motion: LinearMotionModel
    measurement: MeasurementModel
    clutter: ClutterModel
    birth: BirthModel
    init_ppp: GaussianMixture
    seed: int

    @property
    def k_max(self) -> int:
        return self.truth.k_max


def _field(cfg: dict, path: str, key: str, expected=None):
    if key not in cfg:
        raise ConfigError(f"missing field {path}.{key}")
    value = cfg[key]
    if expected is not None and not isinstance(value, expected):
        raise ConfigError(f"field {path}.{key} has wrong type {type(value).__name__}")
    return value


def _mixture(cfg: dict, path: str) -> GaussianMixture:
    weights = _field(cfg, path, "weights", list)
    means = _field(cfg, path, "means", list)
    covs = _field(cfg, path, "covs", list)
    if not len(weights) == len(means) == len(covs):
        raise ConfigError(f"{path}: weights/means/covs lengths differ")
    comps = []
    for w, m, c in zip(weights, means, covs):
        comps.append((float(w), GaussianDensity(np.asarray(m, float), np.asarray(c, float))))
    return GaussianMixture(tuple(comps))


def load_scenario_config(source) -> ScenarioConfig:
    """Parse a scenario config from a dict, JSON string, or file path."""
    if isinstance(source, (str, Path)) and Path(source).exists():
        cfg = json.loads(Path(source).read_text())
    elif isinstance(source, str):
        cfg = json.loads(source)
    else:
        cfg = source
    if not isinstance(cfg, dict):
        raise ConfigError("scenario config must be a JSON object")

    k_max = int(_field(cfg, "", "K"))
    if k_max < 1:
        raise ConfigError("K must be >= 1")

    mo = _field(cfg, "", "motion", dict)
    ps = float(_field(mo, "motion", "pS"))
    if mo.get("model") == "cv":
        motion = make_cv_model(
            float(_field(mo, "motion", "Ts")),
            float(_field(mo, "motion", "sigma_q")),
            ps,
            dims=int(mo.get("dims", 2)),
        )
    else:
        motion = LinearMotionModel(
            np.asarray(_field(mo, "motion", "F", list), float),
            np.asarray(_field(mo, "motion", "Q", list), float),
            ps,
        )

    me = _field(cfg, "", "measurement", dict)
    pd = float(_field(me, "measurement", "pD"))
    if me.get("model") == "position":
        if motion.dim % 2 != 0:
            raise ConfigError("measurement.model=position needs (pos, vel) state pairs")
        measurement = make_position_measurement(
            motion.dim // 2, float(_field(me, "measurement", "sigma_r")), pd
        )
    else:
        measurement = MeasurementModel(
            np.asarray(_field(me, "measurement", "H", list), float),
            np.asarray(_field(me, "measurement", "R", list), float),
            pd,
        )
    if measurement.dim_x != motion.dim:
        raise ConfigError("measurement.H columns must match the motion state dimension")

    cl = _field(cfg, "", "clutter", dict)
    clutter = ClutterModel(
        float(_field(cl, "clutter", "rate")),
        np.asarray(_field(cl, "clutter", "region", list), float),
    )
    if clutter.region.shape[0] != measurement.dim_z:
        raise ConfigError("clutter.region dimension must match the measurement dimension")

    bi = _field(cfg, "", "birth", dict)
    birth = BirthModel(_mixture(bi, "birth"), float(bi.get("uniform_density", 0.0)))
    init_ppp = (
        _mixture(cfg["init_ppp"], "init_ppp") if "init_ppp" in cfg else birth.intensity
    )

    sc = _field(cfg, "", "schedule", dict)
    births = tuple(int(b) for b in _field(sc, "schedule", "births", list))
    deaths = tuple(int(d) for d in _field(sc, "schedule", "deaths", list))
    init_means = tuple(
        np.asarray(m, float) for m in _field(sc, "schedule", "init_means", list)
    )
    if not len(births) == len(deaths) == len(init_means):
        raise ConfigError("schedule: births/deaths/init_means lengths differ")
    for i, (b, d) in enumerate(zip(births, deaths)):
        if d < b:
            raise ConfigError(f"schedule: object {i} dies at {d} before birth {b}")
        if b < 1 or d > k_max:
            raise ConfigError(f"schedule: object {i} interval {b}:{d} outside 1:{k_max}")
    for i, m in enumerate(init_means):
        if m.shape != (motion.dim,):
            raise ConfigError(f"schedule.init_means[{i}] has wrong dimension")
    if "init_cov" in sc:
        init_cov = np.asarray(sc["init_cov"], float)
    elif len(birth.intensity) > 0:
        init_cov = birth.intensity.components[0][1].cov
    else:
        raise ConfigError("schedule.init_cov required when birth mixture is empty")

    return ScenarioConfig(
        k_max=k_max,
        motion=motion,
        measurement=measurement,
        clutter=clutter,
        birth=birth,
        init_ppp=init_ppp,
        births=births,
        deaths=deaths,
        init_means=init_means,
        init_cov=init_cov,
        seed=int(_field(cfg, "", "seed")),
    )


def _chol_psd(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def generate_truth(config: ScenarioConfig, rng: np.random.Generator) -> GroundTruth:
    """Sample object trajectories on the configured birth/death schedule.

    Initial states are N(init_mean, init_cov) draws; subsequent states follow
    x_{k+1} ~ N(F x_k, Q) until the scheduled death.
    """
    root_f = _chol_psd(config.init_cov)
    root_q = _chol_psd(config.motion.Q)
    trajectories = []
    for b, d, mean in zip(config.births, config.deaths, config.init_means):
        x = mean + root_f @ rng.standard_normal(config.motion.dim)
        states = [x]
        for _ in range(b, d):
            x = config.motion.F @ x + root_q @ rng.standard_normal(config.motion.dim)
            states.append(x)
        trajectories.append(Trajectory(b, np.array(states)))
    return GroundTruth(tuple(trajectories), config.k_max)


def generate_measurements(
    truth: GroundTruth,
    mm: MeasurementModel,
    cm: ClutterModel,
    rng: np.random.Generator,
) -> list[list[np.ndarray]]:
    """Detections (probability pd, noise R) plus Poisson-uniform clutter per scan."""
    root_r = _chol_psd(mm.R)
    scans = []
    for k in range(1, truth.k_max + 1):
        scan = []
        for tr in truth.trajectories:
            if tr.alive_at(k) and rng.random() < mm.pd:
                scan.append(mm.H @ tr.state_at(k) + root_r @ rng.standard_normal(mm.dim_z))
        scan.extend(cm.sample(rng))
        scans.append(scan)
    return scans


def simulate_scenario(config: ScenarioConfig) -> Scenario:
    """Full scenario draw from the config's seed (truth first, then measurements)."""
    rng = np.random.default_rng(config.seed)
    truth = generate_truth(config, rng)
    measurements = generate_measurements(truth, config.measurement, config.clutter, rng)
    return Scenario(
        truth=truth,
        measurements=measurements,
        motion=config.motion,
        measurement=config.measurement,
        clutter=config.clutter,
        birth=config.birth,
        init_ppp=config.init_ppp,
        seed=config.seed,
    )


def _mixture_to_jsonable(mix: GaussianMixture) -> dict:
    return {
        "weights": [w for w, _ in mix],
        "means": [g.mean.tolist() for _, g in mix],
        "covs": [g.cov.tolist() for _, g in mix],
    }


def _mixture_from_jsonable(data: dict) -> GaussianMixture:
    return GaussianMixture(
        tuple(
            (float(w), GaussianDensity(np.asarray(m, float), np.asarray(c, float)))
            for w, m, c in zip(data["weights"], data["means"], data["covs"])
        )
    )


def scenario_to_jsonable(sc: Scenario) -> dict:
    return {
        "k_max": sc.k_max,
        "seed": sc.seed,
        "models": {
            "motion": {"F": sc.motion.F.tolist(), "Q": sc.motion.Q.tolist(), "ps": sc.motion.ps},
            "measurement": {
                "H": sc.measurement.H.tolist(),
                "R": sc.measurement.R.tolist(),
                "pd": sc.measurement.pd,
            },
            "clutter": {"rate": sc.clutter.rate, "region": sc.clutter.region.tolist()},
            "birth": {
                **_mixture_to_jsonable(sc.birth.intensity),
                "uniform_density": sc.birth.uniform_density,
            },
            "init_ppp": _mixture_to_jsonable(sc.init_ppp),
        },
        "truth": {
            "trajectories": [
                {"t": tr.t, "states": tr.states.tolist()} for tr in sc.truth.trajectories
            ]
        },
        "measurements": [[z.tolist() for z in scan] for scan in sc.measurements],
    }


def scenario_from_jsonable(data: dict) -> Scenario:
    models = data["models"]
    truth = GroundTruth(
        tuple(
            Trajectory(tr["t"], np.asarray(tr["states"], float))
            for tr in data["truth"]["trajectories"]
        ),
        int(data["k_max"]),
    )
    return Scenario(
        truth=truth,
        measurements=[[np.asarray(z, float) for z in scan] for scan in data["measurements"]],
        motion=LinearMotionModel(
            np.asarray(models["motion"]["F"], float),
            np.asarray(models["motion"]["Q"], float),
            float(models["motion"]["ps"]),
        ),
        measurement=MeasurementModel(
            np.asarray(models["measurement"]["H"], float),
            np.asarray(models["measurement"]["R"], float),
            float(models["measurement"]["pd"]),
        ),
        clutter=ClutterModel(
            float(models["clutter"]["rate"]), np.asarray(models["clutter"]["region"], float)
        ),
        birth=BirthModel(
            _mixture_from_jsonable(models["birth"]),
            float(models["birth"].get("uniform_density", 0.0)),
        ),
        init_ppp=_mixture_from_jsonable(models["init_ppp"]),
        seed=int(data["seed"]),
    )
