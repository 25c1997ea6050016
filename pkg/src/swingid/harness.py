"""Simulated plant, multi-rate scheduling, trial and sweep runners, logging.

A trial has two stages.  Stage one excites the pendulum while the online
estimator identifies the string length from noisy load-cell samples: every
integration step the plant advances and emits a measurement, the estimator
ticks at its own rate, and the excitation synthesis re-anchors on the
estimator's published (estimate, observer state) pair at the excitation loop
rate.  Stage two plans the swing task at the final estimate, rolls the
planned controls open loop on the true plant, and scores the landing.

Everything runs on one simulated clock and owns a seeded generator, so a
(config, seed) pair reproduces results exactly.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .estimator import (
    EstimateRecord,
    EstimatorConfig,
    Measurement,
    OnlineEstimator,
)
from .model import (
    DivergenceError,
    NoiseModel,
    Params,
    SuspendedMass,
    output_force,
    rollout_base,
    string_tension,
)
from .sac import Action, SacConfig, synthesize_action
from .trajopt import (
    ConvergenceError,
    TaskConfig,
    TaskPlan,
    TaskTrajectory,
    make_task_trajectory,
    optimize_task,
)

THETA0_GRID = tuple(round(0.308 + 0.02 * i, 3) for i in range(9))

CSV_COLUMNS = ("t", "xB", "vB", "phi", "phidot", "u", "force_meas", "force_pred", "theta_hat")

logger = logging.getLogger(__name__)


class PlantSim:
    """The true plant: integrates the suspended-mass dynamics step by step
    and emits load-cell samples with additive output noise.

    Measurements pair the current state with the control held over the step
    that produced it (zero before the first step), matching the estimator's
    observer convention.  noise=None runs the plant noise-free.
    """

    def __init__(
        self,
        params: Params,
        noise: NoiseModel | None = None,
        seed: int = 0,
        dt: float = 0.01,
        x0=None,
    ):
        if dt <= 0.0:
            raise ValueError("dt must be > 0")
        self.params = params
        self.noise = noise
        self.dt = float(dt)
        self._sigma = 0.0 if noise is None else math.sqrt(noise.sigma2)
        self._x0 = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float).copy()
        self._seed = int(seed)
        self.reset()

    def reset(self) -> None:
        """Return to the initial state and restart the noise stream."""
        self.state = self._x0.copy()
        self.t = 0.0
        self._last_u = 0.0
        self._rng = np.random.default_rng(self._seed)
        self._tension_warned = False

    def measure(self) -> Measurement:
        y = output_force(self.state, self._last_u, self.params)
        if self._sigma > 0.0:
            y += self._rng.normal(0.0, self._sigma)
        return Measurement(t=self.t, force=float(y))

    def step(self, u: float) -> Measurement:
        """Advance one step under control u and sample the load cell."""
        traj = rollout_base(self.params, self.state, [u], self.dt, t0=self.t)
        self.state = traj.states[-1]
        self.t += self.dt
        self._last_u = float(u)
        # taut-string model is assumed, not enforced; flag when it breaks
        if not self._tension_warned and string_tension(self.state, u, self.params) <= 0.0:
            logger.warning("string tension non-positive at t=%.3f; model kept", self.t)
            self._tension_warned = True
        return self.measure()

    def run(self, duration: float, u: float = 0.0) -> list[Measurement]:
        """Constant-control measurement stream over the given span."""
        n = int(round(duration / self.dt))
        return [self.step(u) for _ in range(n)]


@dataclass(frozen=True)
class SuccessCriteria:
    """Landing box geometry: target abscissa, half-width, rim height and the
    maximum mass speed that still counts as dropping in."""

    x_target: float = -0.45
    x_tol: float = 0.05
    z_rim: float = -0.30
    speed_max: float = 0.2

    def __post_init__(self):
        if self.x_tol <= 0.0 or self.speed_max <= 0.0:
            raise ValueError("x_tol and speed_max must be > 0")


def success_check(terminal_mass, criteria: SuccessCriteria | None = None) -> bool:
    """True iff the mass ends over the box, above its rim, and slow enough."""
    crit = SuccessCriteria() if criteria is None else criteria
    x, z, vx, vz = np.asarray(terminal_mass, dtype=float)
    return bool(
        abs(x - crit.x_target) <= crit.x_tol
        and z >= crit.z_rim
        and math.hypot(vx, vz) <= crit.speed_max
    )


@dataclass(frozen=True)
class TrialConfig:
    """Everything one trial needs: initial guess, phase lengths, seed, and
    the per-module configurations."""

    theta0: float = 0.448
    use_estimation: bool = True
    est_duration: float = 6.0
    quiescent_lead: float = 1.0
    seed: int = 0
    ell_true: float = 0.368
    mass: float = 0.05
    gravity: float = 9.81
    noise: NoiseModel = field(default_factory=NoiseModel)
    sac: SacConfig = field(default_factory=SacConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    success: SuccessCriteria = field(default_factory=SuccessCriteria)
    bias_ref: tuple = (0.1, 0.0, 0.0, 0.0)
    bias_span: float = 0.5
    out_dir: str | None = None

    def __post_init__(self):
        lo, hi = self.estimator.theta_bounds
        if not (lo <= self.theta0 <= hi):
            raise ValueError(f"theta0 {self.theta0} outside estimator bounds [{lo}, {hi}]")
        if self.ell_true <= 0.0:
            raise ValueError("ell_true must be > 0")
        if self.est_duration <= 0.0:
            raise ValueError("est_duration must be > 0")
        if not (0.0 <= self.quiescent_lead < self.est_duration):
            raise ValueError("need 0 <= quiescent_lead < est_duration")
        if self.bias_span < 0.0:
            raise ValueError("bias_span must be >= 0")
        if len(self.bias_ref) != 4:
            raise ValueError("bias_ref must have 4 entries")


class RunLog:
    """Per-step rows of one stage, in the CSV column order; None means the
    field does not apply at that row."""

    def __init__(self):
        self.rows: list[tuple] = []

    def append(self, t, state, u, force_meas, force_pred, theta_hat) -> None:
        if self.rows and t <= self.rows[-1][0]:
            raise ValueError("log time must be strictly increasing")
        s = np.asarray(state, dtype=float)
        self.rows.append((float(t), s[0], s[1], s[2], s[3], u, force_meas, force_pred, theta_hat))

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one trial; success comes solely from success_check."""

    config: TrialConfig
    records: tuple[EstimateRecord, ...]
    theta_final: float
    plan: TaskPlan | None
    executed: TaskTrajectory | None
    terminal_mass: np.ndarray | None
    success: bool
    error: str | None
    elapsed: dict


def _estimation_phase(cfg: TrialConfig, plant: PlantSim, base: Params):
    """Stage one: excite, measure, estimate.  Returns (estimator, log)."""
    dt = cfg.sac.dt
    est = OnlineEstimator(cfg.theta0, cfg.noise, cfg.estimator, base, t0=0.0, dt=dt)
    log = RunLog()
    n = int(round(cfg.est_duration / dt))
    steps_per_loop = max(1, int(round(cfg.sac.loop_dt / dt)))
    bias_until = cfg.quiescent_lead + cfg.bias_span
    bias_ref = np.asarray(cfg.bias_ref, dtype=float)
    meas = plant.measure()
    est.record_measurement(meas)
    prev_u = 0.0
    action = Action(u_star=0.0, tau_star=0.0, duration=0.0)
    for k in range(n):
        t = k * dt
        est.maybe_tick(t)
        theta_now, xbar = est.current()
        if t + 1e-9 >= cfg.quiescent_lead and k % steps_per_loop == 0:
            model = SuspendedMass(replace(base, ell=theta_now))
            x_ref = bias_ref if t < bias_until else None
            action = synthesize_action(xbar, t, model, cfg.noise, cfg.sac, x_ref=x_ref)
        u = action.u_star if (not action.is_null and action.covers(t)) else 0.0
        pred = output_force(xbar[:4], prev_u, replace(base, ell=theta_now))
        log.append(t, plant.state, u, meas.force, pred, theta_now)
        meas = plant.step(u)
        est.record_control(u)
        est.record_measurement(meas)
        prev_u = u
    est.maybe_tick(cfg.est_duration)
    theta_now, xbar = est.current()
    pred = output_force(xbar[:4], prev_u, replace(base, ell=theta_now))
    log.append(cfg.est_duration, plant.state, None, meas.force, pred, theta_now)
    return est, log


def _check_tension(traj, params: Params) -> None:
    """Warn once if the string would have gone slack along a rollout."""
    u_at = np.concatenate(([0.0], traj.controls))
    for k in range(len(traj.states)):
        tension = string_tension(traj.states[k], u_at[k], params)
        if tension <= 0.0:
            logger.warning(
                "string tension non-positive at t=%.3f; model kept", traj.times[k]
            )
            return


def _plan_log(plan: TaskPlan, theta_hat: float) -> RunLog:
    log = RunLog()
    traj = plan.trajectory.traj
    for k, t in enumerate(traj.times):
        u = traj.controls[k] if k < traj.n_steps else None
        log.append(t, traj.states[k], u, None, None, theta_hat)
    return log


def run_estimation(cfg: TrialConfig):
    """Stage one alone: excitation plus online identification.

    Returns (estimate records, final estimate, run log); writes
    estimation.csv under cfg.out_dir when one is set.
    """
    true_params = Params(ell=cfg.ell_true, mass=cfg.mass, gravity=cfg.gravity)
    base = Params(ell=cfg.theta0, mass=cfg.mass, gravity=cfg.gravity)
    plant = PlantSim(true_params, cfg.noise, seed=cfg.seed, dt=cfg.sac.dt)
    est, log = _estimation_phase(cfg, plant, base)
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_run_log(log, out / "estimation.csv")
    return tuple(est.records), est.theta_hat, log


def run_trial(cfg: TrialConfig) -> TrialResult:
    """Full pipeline: optional estimation stage, task planning at the final
    estimate, open-loop execution on the true plant, success scoring."""
    t_start = time.perf_counter()
    true_params = Params(ell=cfg.ell_true, mass=cfg.mass, gravity=cfg.gravity)
    base = Params(ell=cfg.theta0, mass=cfg.mass, gravity=cfg.gravity)
    records: tuple[EstimateRecord, ...] = ()
    est_log = None
    theta_hat = cfg.theta0
    error = None
    t_est0 = time.perf_counter()
    if cfg.use_estimation:
        plant = PlantSim(true_params, cfg.noise, seed=cfg.seed, dt=cfg.sac.dt)
        try:
            est, est_log = _estimation_phase(cfg, plant, base)
            theta_hat = est.theta_hat
            records = tuple(est.records)
        except DivergenceError as exc:
            error = f"estimation diverged: {exc}"
    est_elapsed = time.perf_counter() - t_est0

    plan = None
    executed = None
    terminal = None
    success = False
    t_plan0 = time.perf_counter()
    if error is None:
        try:
            plan = optimize_task(theta_hat, cfg.task, base=base)
        except (ConvergenceError, DivergenceError) as exc:
            error = f"task optimization failed: {exc}"
    plan_elapsed = time.perf_counter() - t_plan0
    if plan is not None:
        controls = plan.trajectory.traj.controls
        rolled = rollout_base(true_params, np.zeros(4), controls, cfg.task.dt)
        _check_tension(rolled, true_params)
        executed = make_task_trajectory(rolled, true_params)
        terminal = executed.mass[-1]
        success = success_check(terminal, cfg.success)

    result = TrialResult(
        config=cfg,
        records=records,
        theta_final=theta_hat,
        plan=plan,
        executed=executed,
        terminal_mass=terminal,
        success=success,
        error=error,
        elapsed={
            "estimation": est_elapsed,
            "planning": plan_elapsed,
            "total": time.perf_counter() - t_start,
        },
    )
    if cfg.out_dir is not None:
        write_trial_logs(result, est_log, cfg.out_dir)
    return result


def trial_summary(result: TrialResult) -> dict:
    """The documented JSON summary object for one trial."""
    return {
        "trial": {
            "theta0": result.config.theta0,
            "use_estimation": result.config.use_estimation,
            "theta_final": result.theta_final,
            "success": result.success,
            "terminal_mass": None
            if result.terminal_mass is None
            else [float(v) for v in result.terminal_mass],
            "iters_trajopt": None if result.plan is None else result.plan.iterations,
            "cost_final": None if result.plan is None else result.plan.cost,
            "error": result.error,
        }
    }


def _format(value) -> str:
    if value is None:
        return ""
    return format(float(value), ".17g")


def write_run_log(log: RunLog, path) -> None:
    """One CSV file; numeric fields carry 17 significant digits so parsing
    them back reproduces the in-memory values exactly."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in log.rows:
                writer.writerow([_format(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write log {path}: {exc}") from exc


def write_summary(summary: dict, path) -> None:
    path = Path(path)
    try:
        with open(path, "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write summary {path}: {exc}") from exc


def write_trial_logs(result: TrialResult, est_log: RunLog | None, out_dir) -> None:
    """Emit the per-stage CSV logs plus summary.json under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if est_log is not None:
        write_run_log(est_log, out / "estimation.csv")
    if result.plan is not None:
        write_run_log(_plan_log(result.plan, result.theta_final), out / "plan.csv")
    if result.executed is not None:
        exec_log = RunLog()
        traj = result.executed.traj
        for k, t in enumerate(traj.times):
            u = traj.controls[k] if k < traj.n_steps else None
            exec_log.append(t, traj.states[k], u, None, None, result.theta_final)
        write_run_log(exec_log, out / "rollout.csv")
    write_summary(trial_summary(result), out / "summary.json")


@dataclass(frozen=True)
class SweepRow:
    theta0: float
    with_est: TrialResult
    without_est: TrialResult


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    mean_theta: float
    std_theta: float


def run_sweep(base_cfg: TrialConfig | None = None, out_dir=None) -> SweepResult:
    """Both columns of the result table: each initial estimate runs once with
    estimation and once without.  Per-trial seeds are offset from the base
    seed (with-estimation trials by row index, without by 100 + row index)
    so every trial has an independent noise stream."""
    cfg = TrialConfig() if base_cfg is None else base_cfg
    out = None if out_dir is None else Path(out_dir)
    rows = []
    for i, theta0 in enumerate(THETA0_GRID):
        with_dir = None if out is None else str(out / f"with_{theta0:.3f}")
        without_dir = None if out is None else str(out / f"without_{theta0:.3f}")
        with_cfg = replace(
            cfg, theta0=theta0, use_estimation=True, seed=cfg.seed + i, out_dir=with_dir
        )
        without_cfg = replace(
            cfg, theta0=theta0, use_estimation=False, seed=cfg.seed + 100 + i, out_dir=without_dir
        )
        rows.append(
            SweepRow(
                theta0=theta0,
                with_est=run_trial(with_cfg),
                without_est=run_trial(without_cfg),
            )
        )
    finals = np.array([r.with_est.theta_final for r in rows])
    result = SweepResult(
        rows=tuple(rows),
        mean_theta=float(np.mean(finals)),
        std_theta=float(np.std(finals, ddof=1)),
    )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        trials = []
        for row in rows:
            trials.append(trial_summary(row.with_est)["trial"])
            trials.append(trial_summary(row.without_est)["trial"])
        write_summary(
            {
                "trials": trials,
                "mean_theta": result.mean_theta,
                "std_theta": result.std_theta,
            },
            out / "summary.json",
        )
    return result


def sweep_table(result: SweepResult) -> str:
    """Human-readable two-column success table."""
    lines = ["theta0   with estimation   without estimation"]
    for row in result.rows:
        w = "success" if row.with_est.success else "fail"
        wo = "success" if row.without_est.success else "fail"
        lines.append(f"{row.theta0:.3f}    {w:<17} {wo}")
    lines.append(
        f"final estimates: mean {result.mean_theta:.4f} m, std {result.std_theta:.4f} m"
    )
    return "\n".join(lines)
