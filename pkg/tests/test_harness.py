"""Tests for the simulated plant, trial runner, logging and invariant checks."""

import csv
import json
import logging
import math
from dataclasses import replace

import numpy as np
import pytest

from swingid.checks import run_checks
from swingid.harness import (
    CSV_COLUMNS,
    THETA0_GRID,
    PlantSim,
    RunLog,
    SuccessCriteria,
    TrialConfig,
    run_estimation,
    run_trial,
    success_check,
    trial_summary,
    write_run_log,
    write_summary,
)
from swingid.model import DivergenceError, NoiseModel, Params, output_force

ELL_TRUE = 0.368
TRUE_PARAMS = Params(ell=ELL_TRUE)
MG = TRUE_PARAMS.mass * TRUE_PARAMS.gravity


def test_plant_rest_noise_free_reads_weight():
    plant = PlantSim(TRUE_PARAMS, noise=None)
    samples = plant.run(1.0)
    assert len(samples) == 100
    assert all(m.force == pytest.approx(MG, abs=1e-12) for m in samples)


def test_plant_sample_count_rate_arithmetic():
    plant = PlantSim(TRUE_PARAMS, NoiseModel(), seed=0)
    samples = plant.run(6.0)
    assert len(samples) == 600
    assert samples[-1].t == pytest.approx(6.0, abs=1e-9)


def test_plant_measurement_pairs_last_applied_control():
    plant = PlantSim(TRUE_PARAMS, noise=None)
    m = plant.step(2.0)
    assert m.force == pytest.approx(output_force(plant.state, 2.0, TRUE_PARAMS), abs=0.0)
    # before any step the paired control is zero
    fresh = PlantSim(TRUE_PARAMS, noise=None)
    assert fresh.measure().force == pytest.approx(MG, abs=1e-12)


def test_plant_residual_variance_matches_noise():
    plant = PlantSim(TRUE_PARAMS, NoiseModel(), seed=0)
    forces = np.array([m.force for m in plant.run(6.0)])
    var = np.var(forces - MG, ddof=1)
    assert abs(var / 1e-4 - 1.0) <= 0.2


def test_plant_determinism_and_seed_sensitivity():
    runs = []
    for seed in (7, 7, 8):
        plant = PlantSim(TRUE_PARAMS, NoiseModel(), seed=seed)
        runs.append([m.force for m in plant.run(0.5)])
    assert runs[0] == runs[1]
    assert runs[0] != runs[2]


def test_plant_reset_restores_initial_state_and_stream():
    plant = PlantSim(TRUE_PARAMS, NoiseModel(), seed=3)
    first = [m.force for m in plant.run(0.3, u=1.0)]
    plant.reset()
    assert plant.t == 0.0
    assert np.array_equal(plant.state, np.zeros(4))
    assert [m.force for m in plant.run(0.3, u=1.0)] == first


def test_plant_divergence_raises():
    plant = PlantSim(TRUE_PARAMS, noise=None)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError):
            plant.step(1e308)


def test_plant_warns_once_when_string_goes_slack(caplog):
    plant = PlantSim(TRUE_PARAMS, noise=None)
    plant.state = np.array([0.0, 0.0, np.pi / 4, 0.0])
    with caplog.at_level(logging.WARNING, logger="swingid.harness"):
        plant.step(15.0)
        plant.step(15.0)
    hits = [r for r in caplog.records if "tension" in r.message]
    assert len(hits) == 1


def test_success_check_thresholds():
    assert success_check([-0.45, -0.26, 0.0, 0.0])
    assert not success_check([-0.30, -0.26, 0.0, 0.0])  # 0.15 m miss
    assert success_check([-0.40, -0.26, 0.0, 0.0])  # on the 0.05 m edge
    assert not success_check([-0.45, -0.31, 0.0, 0.0])  # below the rim
    assert success_check([-0.45, -0.26, 0.2, 0.0])  # speed on the edge
    assert not success_check([-0.45, -0.26, 0.15, 0.15])  # speed 0.21


def test_success_criteria_validation():
    with pytest.raises(ValueError):
        SuccessCriteria(x_tol=0.0)
    with pytest.raises(ValueError):
        SuccessCriteria(speed_max=-0.1)


def test_trial_config_validation():
    with pytest.raises(ValueError):
        TrialConfig(theta0=0.05)
    with pytest.raises(ValueError):
        TrialConfig(quiescent_lead=6.0, est_duration=6.0)
    with pytest.raises(ValueError):
        TrialConfig(bias_ref=(0.1, 0.0))
    with pytest.raises(ValueError):
        TrialConfig(est_duration=0.0)


def test_run_log_requires_increasing_time():
    log = RunLog()
    log.append(0.0, np.zeros(4), 0.0, 1.0, 1.0, 0.4)
    log.append(0.01, np.zeros(4), None, None, None, 0.4)
    with pytest.raises(ValueError):
        log.append(0.01, np.zeros(4), 0.0, 1.0, 1.0, 0.4)


def test_write_run_log_empty_gives_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    write_run_log(RunLog(), path)
    rows = list(csv.reader(path.open()))
    assert rows == [list(CSV_COLUMNS)]


def test_write_run_log_round_trips_exactly(tmp_path):
    log = RunLog()
    state = np.array([0.1, -0.25, math.pi / 7, -1.0 / 3.0])
    log.append(0.0, state, 2.0 / 3.0, 0.4905, 0.49, 0.368)
    log.append(0.01, state * 1.7, None, 1e-17, -3.25e8, 0.31)
    path = tmp_path / "log.csv"
    write_run_log(log, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == list(CSV_COLUMNS)
    for written, original in zip(rows[1:], log.rows):
        for field, value in zip(written, original):
            if value is None:
                assert field == ""
            else:
                assert float(field) == value


def test_estimation_stage_rates_and_artifacts(tmp_path):
    cfg = TrialConfig(theta0=0.448, seed=1, est_duration=1.5, out_dir=str(tmp_path))
    records, theta_hat, log = run_estimation(cfg)
    lo, hi = cfg.estimator.theta_bounds
    assert lo <= theta_hat <= hi
    assert [r.t for r in records] == [0.5, 1.0, 1.5]
    assert len(log.rows) == 151
    times = np.array([row[0] for row in log.rows])
    assert np.allclose(times, 0.01 * np.arange(151), rtol=0.0, atol=1e-12)
    assert (tmp_path / "estimation.csv").exists()


def test_estimation_identifies_true_length():
    cfg = TrialConfig(theta0=0.448, seed=7)
    _, theta_hat, _ = run_estimation(cfg)
    assert theta_hat == pytest.approx(ELL_TRUE, abs=0.005)


def test_trial_without_estimation_at_true_length_succeeds():
    result = run_trial(TrialConfig(theta0=0.368, use_estimation=False, seed=0))
    assert result.success
    assert result.theta_final == 0.368
    assert result.error is None
    assert result.records == ()


def test_trial_without_estimation_far_guess_fails():
    result = run_trial(TrialConfig(theta0=0.308, use_estimation=False, seed=0))
    assert not result.success
    assert result.error is None
    speed = math.hypot(result.terminal_mass[2], result.terminal_mass[3])
    assert speed > 0.2


def test_trial_with_estimation_recovers_far_guess(tmp_path):
    cfg = TrialConfig(theta0=0.308, use_estimation=True, seed=0, out_dir=str(tmp_path))
    result = run_trial(cfg)
    assert result.success
    assert result.theta_final == pytest.approx(ELL_TRUE, abs=0.005)
    # benefit never inverts: the final error cannot exceed the initial one
    assert abs(result.theta_final - ELL_TRUE) <= abs(cfg.theta0 - ELL_TRUE)
    for name in ("estimation.csv", "plan.csv", "rollout.csv", "summary.json"):
        assert (tmp_path / name).exists()
    with (tmp_path / "summary.json").open() as fh:
        summary = json.load(fh)
    trial = summary["trial"]
    assert set(trial) == {
        "theta0",
        "use_estimation",
        "theta_final",
        "success",
        "terminal_mass",
        "iters_trajopt",
        "cost_final",
        "error",
    }
    assert trial["success"] is True
    assert trial["theta0"] == 0.308
    assert len(trial["terminal_mass"]) == 4


def test_trial_failed_optimization_is_reported_not_raised():
    cfg = TrialConfig(
        theta0=0.368,
        use_estimation=False,
        task=replace(TrialConfig().task, max_iters=2),
    )
    result = run_trial(cfg)
    assert not result.success
    assert result.plan is None
    assert "optimization failed" in result.error


def test_trial_summary_reports_failure_fields():
    cfg = TrialConfig(
        theta0=0.368,
        use_estimation=False,
        task=replace(TrialConfig().task, max_iters=2),
    )
    summary = trial_summary(run_trial(cfg))["trial"]
    assert summary["success"] is False
    assert summary["iters_trajopt"] is None
    assert summary["cost_final"] is None
    assert summary["terminal_mass"] is None
    assert "optimization failed" in summary["error"]


def test_write_summary_round_trips(tmp_path):
    path = tmp_path / "s.json"
    payload = {"trial": {"theta0": 0.368, "success": True}}
    write_summary(payload, path)
    assert json.loads(path.read_text()) == payload


def test_theta0_grid_matches_documented_sweep():
    assert THETA0_GRID == (0.308, 0.328, 0.348, 0.368, 0.388, 0.408, 0.428, 0.448, 0.468)
    assert all(b - a == pytest.approx(0.02) for a, b in zip(THETA0_GRID, THETA0_GRID[1:]))


def test_runtime_invariant_checks_pass():
    results = run_checks(TrialConfig())
    assert all(r.passed for r in results), [(r.name, r.detail) for r in results]
