"""Runtime invariant suites behind the `check` subcommand.

Each suite exercises one documented property of the running system on small,
seeded scenarios: bit-exact determinism, exact sample/tick rates on the
shared clock, zero information content of the resting plant, output-noise
calibration, and the estimator improving (or at worst preserving) the
initial guess.  They complement the unit tests: these run against whatever
configuration the user supplies.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .harness import PlantSim, TrialConfig, run_estimation
from .model import Params, fisher_information, gamma_theta, rollout_extended


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _short_cfg(cfg: TrialConfig, **kw) -> TrialConfig:
    return replace(cfg, out_dir=None, use_estimation=True, **kw)


def check_determinism(cfg: TrialConfig) -> CheckResult:
    """Same config and seed twice -> identical estimates and identical logs."""
    short = _short_cfg(cfg, est_duration=1.5)
    _, theta_a, log_a = run_estimation(short)
    _, theta_b, log_b = run_estimation(short)
    same_theta = theta_a == theta_b
    same_rows = log_a.rows == log_b.rows
    ok = same_theta and same_rows
    detail = (
        f"theta repeat exact: {same_theta}, log rows identical: {same_rows}"
        f" ({len(log_a.rows)} rows)"
    )
    return CheckResult("determinism", ok, detail)


def check_rates(cfg: TrialConfig) -> CheckResult:
    """Measurement, estimator and synthesis cadences sit exactly on the
    simulated clock grid."""
    short = _short_cfg(cfg, est_duration=2.0)
    records, _, log = run_estimation(short)
    dt = short.sac.dt
    n_expected = int(round(short.est_duration / dt)) + 1
    times = np.array([row[0] for row in log.rows])
    grid_ok = len(times) == n_expected and np.allclose(
        times, np.arange(n_expected) * dt, rtol=0.0, atol=1e-12
    )
    tick_dt = 1.0 / short.estimator.rate
    tick_times = np.array([r.t for r in records])
    n_ticks = int(np.floor(short.est_duration * short.estimator.rate + 1e-9))
    ticks_ok = len(tick_times) == n_ticks and np.allclose(
        tick_times, (np.arange(n_ticks) + 1) * tick_dt, rtol=0.0, atol=1e-12
    )
    ok = grid_ok and ticks_ok
    detail = (
        f"{len(times)} samples on the {1.0 / dt:.0f} Hz grid: {grid_ok}; "
        f"{len(tick_times)} estimator ticks at {short.estimator.rate:g} Hz: {ticks_ok}"
    )
    return CheckResult("rate fidelity", ok, detail)


def check_rest_information(cfg: TrialConfig) -> CheckResult:
    """A resting, uncontrolled plant carries no information about length."""
    p = Params(ell=cfg.ell_true, mass=cfg.mass, gravity=cfg.gravity)
    n = int(round(1.0 / cfg.sac.dt))
    traj = rollout_extended(p, np.zeros(8), np.zeros(n), cfg.sac.dt)
    u_at = np.zeros(len(traj.states))
    gammas = [gamma_theta(traj.states[k], u_at[k], p) for k in range(len(traj.states))]
    info = fisher_information(gammas, cfg.noise)
    ok = info == 0.0
    return CheckResult("rest information", ok, f"Fisher information at rest = {info}")


def check_noise_calibration(cfg: TrialConfig) -> CheckResult:
    """Sample variance of resting measurements matches the configured noise."""
    p = Params(ell=cfg.ell_true, mass=cfg.mass, gravity=cfg.gravity)
    plant = PlantSim(p, cfg.noise, seed=cfg.seed, dt=cfg.sac.dt)
    samples = np.array([m.force for m in plant.run(6.0)])
    residuals = samples - p.mass * p.gravity
    var = float(np.var(residuals, ddof=1))
    rel = abs(var / cfg.noise.sigma2 - 1.0)
    ok = rel <= 0.2
    return CheckResult(
        "noise calibration",
        ok,
        f"residual variance {var:.3e} vs sigma2 {cfg.noise.sigma2:.3e} (rel err {rel:.1%})",
    )


def check_monotone_benefit(cfg: TrialConfig) -> CheckResult:
    """Estimation never worsens the initial guess (up to the noise floor of
    0.005 m, which matters only when the guess is already that close)."""
    lo, hi = cfg.estimator.theta_bounds
    # the extremes of the standard sweep grid, relative to the true length
    starts = [
        max(lo, cfg.ell_true - 0.06),
        min(hi, cfg.ell_true + 0.10),
    ]
    floor = 0.005
    details = []
    ok = True
    for theta0 in starts:
        _, theta_hat, _ = run_estimation(_short_cfg(cfg, theta0=theta0))
        err0 = abs(theta0 - cfg.ell_true)
        err1 = abs(theta_hat - cfg.ell_true)
        good = err1 <= max(err0, floor)
        ok = ok and good
        details.append(f"{theta0:.3f} -> {theta_hat:.4f} (err {err0:.4f} -> {err1:.4f})")
    return CheckResult("monotone benefit", ok, "; ".join(details))


ALL_CHECKS = (
    check_determinism,
    check_rates,
    check_rest_information,
    check_noise_calibration,
    check_monotone_benefit,
)


def run_checks(cfg: TrialConfig | None = None) -> list[CheckResult]:
    cfg = TrialConfig() if cfg is None else cfg
    return [fn(cfg) for fn in ALL_CHECKS]
