import json

import numpy as np
import pytest
from scipy.stats import binom, chi2, poisson

from trajsmooth.errors import ConfigError, ContractError
from trajsmooth.models import ClutterModel, MeasurementModel, make_position_measurement
from trajsmooth.simulate import (
    GroundTruth,
    generate_measurements,
    generate_truth,
    load_scenario_config,
    scenario_from_jsonable,
    scenario_to_jsonable,
    simulate_scenario,
)
from trajsmooth.trajectory import Trajectory, states_at_time


def base_config(**overrides):
    cfg = {
        "K": 20,
        "motion": {"model": "cv", "Ts": 1.0, "sigma_q": 0.1, "pS": 0.98},
        "measurement": {"model": "position", "sigma_r": 1.0, "pD": 0.9},
        "clutter": {"rate": 5.0, "region": [[-100.0, 100.0], [-100.0, 100.0]]},
        "birth": {
            "weights": [0.05],
            "means": [[0.0, 0.0, 0.0, 0.0]],
            "covs": [np.diag([225.0, 1.0, 225.0, 1.0]).tolist()],
        },
        "schedule": {
            "births": [1, 1],
            "deaths": [20, 20],
            "init_means": [[-50.0, 2.0, 0.0, 0.0], [50.0, -2.0, 10.0, -0.5]],
        },
        "seed": 7,
    }
    cfg.update(overrides)
    return cfg


def test_staggered_schedule_lengths():
    cfg = base_config(
        K=81,
        schedule={
            "births": [1, 6, 11, 16, 21, 26],
            "deaths": [41, 51, 61, 61, 71, 81],
            "init_means": [[0.0, 0.0, 0.0, 0.0]] * 6,
        },
    )
    truth = generate_truth(load_scenario_config(cfg), np.random.default_rng(0))
    assert len(truth.trajectories) == 6
    assert [tr.length for tr in truth.trajectories] == [41, 46, 51, 46, 51, 56]
    assert [tr.t for tr in truth.trajectories] == [1, 6, 11, 16, 21, 26]


def test_zero_noise_truth_is_deterministic_recursion():
    cfg = base_config()
    cfg["motion"] = {"model": "cv", "Ts": 1.0, "sigma_q": 0.0, "pS": 1.0}
    config = load_scenario_config(cfg)
    truth = generate_truth(config, np.random.default_rng(3))
    for tr in truth.trajectories:
        for i in range(tr.length - 1):
            np.testing.assert_allclose(tr.states[i + 1], config.motion.F @ tr.states[i])


def test_four_objects_no_deaths():
    cfg = base_config(
        schedule={
            "births": [1, 1, 1, 1],
            "deaths": [20, 20, 20, 20],
            "init_means": [[0.0, 0.0, 0.0, 0.0]] * 4,
        }
    )
    truth = generate_truth(load_scenario_config(cfg), np.random.default_rng(1))
    assert len(truth.trajectories) == 4
    assert all(tr.length == 20 for tr in truth.trajectories)


def test_death_before_birth_rejected():
    cfg = base_config(
        schedule={"births": [5], "deaths": [3], "init_means": [[0.0, 0.0, 0.0, 0.0]]}
    )
    with pytest.raises(ConfigError):
        load_scenario_config(cfg)


def test_k_zero_rejected():
    with pytest.raises(ConfigError):
        load_scenario_config(base_config(K=0))


def test_no_sources_no_measurements():
    cfg = base_config()
    cfg["measurement"]["pD"] = 0.0
    cfg["clutter"]["rate"] = 0.0
    sc = simulate_scenario(load_scenario_config(cfg))
    assert all(len(scan) == 0 for scan in sc.measurements)


def test_deterministic_detection():
    cfg = base_config()
    cfg["measurement"] = {"model": "position", "sigma_r": 1e-12, "pD": 1.0}
    cfg["clutter"]["rate"] = 0.0
    config = load_scenario_config(cfg)
    rng = np.random.default_rng(5)
    truth = generate_truth(config, rng)
    scans = generate_measurements(truth, config.measurement, config.clutter, rng)
    for k, scan in enumerate(scans, start=1):
        expected = {tuple(np.round(config.measurement.H @ x, 6)) for x in states_at_time(truth.trajectories, k)}
        got = {tuple(np.round(z, 6)) for z in scan}
        assert got == expected


def test_clutter_rate_empirical_mean():
    clutter = ClutterModel(30.0, [[-100.0, 100.0], [-100.0, 100.0]])
    truth = GroundTruth((), 10_000)
    mm = make_position_measurement(2, 1.0, 0.0)
    scans = generate_measurements(truth, mm, clutter, np.random.default_rng(11))
    mean = np.mean([len(s) for s in scans])
    assert abs(mean - 30.0) < 1.0


def test_cardinality_distribution_chi_square():
    # two always-alive objects: counts ~ Binomial(2, pd) + Poisson(rate)
    pd_val, rate = 0.7, 3.0
    k_max = 10_000
    states = np.zeros((k_max, 4))
    truth = GroundTruth(
        (Trajectory(1, states), Trajectory(1, states + 50.0)), k_max
    )
    mm = make_position_measurement(2, 1.0, pd_val)
    clutter = ClutterModel(rate, [[-100.0, 100.0], [-100.0, 100.0]])
    scans = generate_measurements(truth, mm, clutter, np.random.default_rng(17))
    counts = np.bincount([len(s) for s in scans])
    n_max = len(counts) - 1
    pmf = np.zeros(n_max + 1)
    for nd in range(3):
        pmf += binom.pmf(nd, 2, pd_val) * poisson.pmf(np.arange(n_max + 1) - nd, rate)
    pmf[-1] += 1.0 - pmf.sum()  # fold the tail into the last bin
    expected = pmf * k_max
    # pool bins with small expected counts into the tail
    keep = expected >= 5.0
    obs = np.append(counts[keep], counts[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    stat = np.sum((obs - exp) ** 2 / exp)
    assert stat < chi2.ppf(0.99, df=len(obs) - 1)


def test_bit_reproducible_under_seed():
    config = load_scenario_config(base_config())
    a = simulate_scenario(config)
    b = simulate_scenario(config)
    for ta, tb in zip(a.truth.trajectories, b.truth.trajectories):
        assert ta == tb
    for sa, sb in zip(a.measurements, b.measurements):
        assert len(sa) == len(sb)
        for za, zb in zip(sa, sb):
            np.testing.assert_array_equal(za, zb)


def test_scenario_json_roundtrip():
    sc = simulate_scenario(load_scenario_config(base_config()))
    blob = json.dumps(scenario_to_jsonable(sc))
    back = scenario_from_jsonable(json.loads(blob))
    assert back.k_max == sc.k_max
    assert back.truth.trajectories == sc.truth.trajectories
    assert json.dumps(scenario_to_jsonable(back)) == blob


def test_trajectory_contracts():
    with pytest.raises(ContractError):
        Trajectory(0, np.zeros((1, 2)))
    tr = Trajectory(3, np.arange(8.0).reshape(4, 2))
    assert tr.last_time == 6
    assert tr.alive_at(3) and tr.alive_at(6) and not tr.alive_at(7)
    np.testing.assert_array_equal(tr.state_at(4), [2.0, 3.0])
    with pytest.raises(ContractError):
        tr.state_at(2)
    ext = tr.prepend(np.array([-1.0, -2.0]))
    assert ext.t == 2 and ext.length == 5
    assert ext != tr and hash(ext) != hash(tr)


def test_truth_horizon_contract():
    with pytest.raises(ContractError):
        GroundTruth((Trajectory(1, np.zeros((5, 2))),), 3)


def test_measurement_model_validation():
    with pytest.raises(ContractError):
        MeasurementModel(np.eye(2), np.eye(3), pd=0.5)
    with pytest.raises(ContractError):
        MeasurementModel(np.eye(2), np.eye(2), pd=-0.1)


def test_clutter_model_validation():
    with pytest.raises(ContractError):
        ClutterModel(1.0, [[1.0, 1.0]])
    with pytest.raises(ContractError):
        ClutterModel(-1.0, [[0.0, 1.0]])
    c = ClutterModel(0.0, [[0.0, 2.0], [0.0, 2.0]])
    assert c.volume == 4.0
    assert c.log_density == -np.inf
