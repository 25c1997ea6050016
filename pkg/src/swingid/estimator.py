"""Online nonlinear least-squares identification of the string length.

Measurements are load-cell force samples; the decision variable is the
string length theta.  Because only force is measured, predictions come from
a forward observer: re-integrating the suspended-mass dynamics from the
known initial rest state, driven by the recorded gripper accelerations, at
the candidate theta.  The fit minimizes

    beta(theta) = 1/2 sum_i (y_meas_i - y_pred_i(theta))^2 / sigma^2

by gradient descent with an Armijo backtracking line search, one outer
iteration per estimator tick.  The analytic gradient routes through the
output sensitivity Gamma of the extended (sensitivity-augmented) rollout:

    dbeta/dtheta = -sum_i (y_meas_i - y_pred_i) * Gamma(t_i) / sigma^2.

The estimate and the observer's current state are published as an atomic
pair so the excitation loop can re-anchor on them at its own cadence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import (
    NoiseModel,
    Params,
    Trajectory,
    output_force,
    rollout_base,
    rollout_extended,
)


@dataclass(frozen=True)
class Measurement:
    """One force sample: timestamp (s) and reading (N)."""

    t: float
    force: float

    def __post_init__(self):
        if not (math.isfinite(self.t) and math.isfinite(self.force)):
            raise ValueError("Measurement fields must be finite")


@dataclass(frozen=True)
class EstimatorConfig:
    """Update cadence, line-search constants and the physical search range.

    The residual weighting by 1/sigma^2 makes gradients of order 1e6 or more
    over a full buffer, so the backtracking must be able to shrink the step
    by many decades (max_backtracks); several inner iterations per tick keep
    far-off initial guesses converging within a short trial.
    """

    rate: float = 2.0
    armijo_c: float = 1e-4
    shrink: float = 0.5
    step0: float = 0.05
    max_backtracks: int = 40
    iters_per_tick: int = 8
    theta_bounds: tuple[float, float] = (0.10, 0.80)

    def __post_init__(self):
        if self.rate <= 0.0:
            raise ValueError("rate must be > 0")
        if not (0.0 < self.armijo_c < 1.0):
            raise ValueError("armijo_c must be in (0, 1)")
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink must be in (0, 1)")
        if self.step0 <= 0.0:
            raise ValueError("step0 must be > 0")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be >= 1")
        if self.iters_per_tick < 1:
            raise ValueError("iters_per_tick must be >= 1")
        lo, hi = self.theta_bounds
        if not (0.0 < lo < hi):
            raise ValueError("theta_bounds must satisfy 0 < lo < hi")


@dataclass(frozen=True)
class EstimateRecord:
    """Estimate published at one tick: time, value and the cost it achieved."""

    t: float
    theta_hat: float
    beta_value: float


class MeasurementBuffer:
    """Append-only trial history: force samples plus the applied control record.

    Controls are zero-order held on the uniform integration grid starting at
    t0; the known initial state x0 anchors every observer re-integration.
    """

    def __init__(self, t0: float = 0.0, dt: float = 0.01, x0=None):
        if dt <= 0.0:
            raise ValueError("dt must be > 0")
        self.t0 = float(t0)
        self.dt = float(dt)
        self.x0 = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float).copy()
        self._meas_t: list[float] = []
        self._meas_y: list[float] = []
        self._controls: list[float] = []

    def __len__(self) -> int:
        return len(self._meas_t)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * len(self._controls)

    def add_measurement(self, m: Measurement) -> None:
        if self._meas_t and m.t < self._meas_t[-1]:
            raise ValueError("measurement timestamps must be non-decreasing")
        self._meas_t.append(m.t)
        self._meas_y.append(m.force)

    def add_control(self, u: float) -> None:
        if not math.isfinite(u):
            raise ValueError("control must be finite")
        self._controls.append(float(u))

    def measurement_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self._meas_t, dtype=float), np.asarray(self._meas_y, dtype=float)

    def control_array(self) -> np.ndarray:
        return np.asarray(self._controls, dtype=float)

    def input_trajectory(self) -> Trajectory:
        u = self.control_array()
        # placeholder states; only the control record and grid matter here
        return Trajectory(t0=self.t0, dt=self.dt, states=np.zeros((len(u) + 1, 4)), controls=u)

    def visible(self, t_max: float) -> "MeasurementBuffer":
        """The part of the history with timestamps (and control intervals) <= t_max."""
        out = MeasurementBuffer(t0=self.t0, dt=self.dt, x0=self.x0)
        n_ctrl = min(len(self._controls), int(round((t_max - self.t0) / self.dt)))
        out._controls = self._controls[: max(n_ctrl, 0)]
        k = np.searchsorted(np.asarray(self._meas_t), t_max, side="right")
        out._meas_t = self._meas_t[:k]
        out._meas_y = self._meas_y[:k]
        return out


def _grid_forces(states: np.ndarray, controls: np.ndarray, p: Params, force_model: str) -> np.ndarray:
    """Force trace on the grid; the sample at t_k pairs the state x_k with the
    control held over the step that ended at t_k (zero before the first step)."""
    m, g, ell = p.mass, p.gravity, p.ell
    phi = states[:, 2]
    phidot = states[:, 3]
    u_at = np.concatenate(([0.0], controls))
    if force_model == "loadcell":
        return m * g * np.cos(phi) - m * ell * phidot**2 - u_at * np.sin(phi)
    return m * (g * np.cos(phi) + ell * phidot**2 - u_at * np.sin(phi))


def _grid_gammas(states: np.ndarray, controls: np.ndarray, p: Params, force_model: str) -> np.ndarray:
    """Output sensitivity on the grid of an extended rollout, same pairing."""
    m, g, ell = p.mass, p.gravity, p.ell
    phi, phidot = states[:, 2], states[:, 3]
    p3, p4 = states[:, 6], states[:, 7]
    u_at = np.concatenate(([0.0], controls))
    base = (-m * g * np.sin(phi) - u_at * np.cos(phi)) * p3
    if force_model == "loadcell":
        return base - 2.0 * m * ell * phidot * p4 - m * phidot**2
    return (-m * g * np.sin(phi) - m * u_at * np.cos(phi)) * p3 + 2.0 * m * ell * phidot * p4 + m * phidot**2


def observe(
    input_traj: Trajectory,
    theta: float,
    x0,
    t_meas,
    base: Params,
    force_model: str = "loadcell",
    with_sensitivity: bool = False,
):
    """Forward-simulate the model at candidate theta under recorded inputs.

    Returns (trajectory, y_pred) where y_pred interpolates the grid force
    trace at the measurement times, or (trajectory, y_pred, gammas) with the
    matching output sensitivities when with_sensitivity is set.  Measurement
    times outside the input record raise ValueError.
    """
    t_meas = np.asarray(t_meas, dtype=float)
    t_end = input_traj.t0 + input_traj.dt * input_traj.n_steps
    if t_meas.size and (t_meas.min() < input_traj.t0 - 1e-12 or t_meas.max() > t_end + 1e-12):
        raise ValueError(
            f"measurement times span [{t_meas.min()}, {t_meas.max()}] "
            f"outside the input record [{input_traj.t0}, {t_end}]"
        )
    p = replace(base, ell=float(theta))
    if with_sensitivity:
        traj = rollout_extended(
            p, np.concatenate([np.asarray(x0, dtype=float), np.zeros(4)]), input_traj.controls, input_traj.dt, t0=input_traj.t0
        )
    else:
        traj = rollout_base(p, x0, input_traj.controls, input_traj.dt, t0=input_traj.t0)
    grid_t = traj.times
    y_grid = _grid_forces(traj.states, input_traj.controls, p, force_model)
    y_pred = np.interp(t_meas, grid_t, y_grid)
    if not with_sensitivity:
        return traj, y_pred
    g_grid = _grid_gammas(traj.states, input_traj.controls, p, force_model)
    gammas = np.interp(t_meas, grid_t, g_grid)
    return traj, y_pred, gammas


def beta(theta: float, buffer: MeasurementBuffer, noise: NoiseModel, base: Params, force_model: str = "loadcell") -> float:
    """Half sum of squared force residuals, weighted by the noise variance."""
    if len(buffer) == 0:
        raise ValueError("beta needs a non-empty measurement buffer")
    t_meas, y_meas = buffer.measurement_arrays()
    _, y_pred = observe(buffer.input_trajectory(), theta, buffer.x0, t_meas, base, force_model)
    r = y_meas - y_pred
    return float(0.5 * np.sum(r * r) / noise.sigma2)


def beta_gradient(theta: float, buffer: MeasurementBuffer, noise: NoiseModel, base: Params, force_model: str = "loadcell") -> float:
    """Analytic d beta / d theta through the observer's output sensitivity."""
    if len(buffer) == 0:
        raise ValueError("beta_gradient needs a non-empty measurement buffer")
    t_meas, y_meas = buffer.measurement_arrays()
    _, y_pred, gammas = observe(
        buffer.input_trajectory(), theta, buffer.x0, t_meas, base, force_model, with_sensitivity=True
    )
    return float(-np.sum((y_meas - y_pred) * gammas) / noise.sigma2)


def _clamp(theta: float, bounds: tuple[float, float]) -> float:
    return min(max(theta, bounds[0]), bounds[1])


def estimator_step(
    theta_hat: float,
    buffer: MeasurementBuffer,
    noise: NoiseModel,
    cfg: EstimatorConfig,
    base: Params,
    force_model: str = "loadcell",
) -> tuple[float, float, bool]:
    """One gradient-descent iteration with Armijo backtracking.

    Returns (theta, beta_at_theta, accepted).  The candidate
    theta - step * grad (clamped to theta_bounds) is accepted only under the
    sufficient-decrease condition
    beta(new) <= beta(old) - armijo_c * step * grad^2; otherwise the step is
    shrunk, and after max_backtracks failures the estimate is left unchanged.
    """
    beta0 = beta(theta_hat, buffer, noise, base, force_model)
    grad = beta_gradient(theta_hat, buffer, noise, base, force_model)
    if grad == 0.0:
        return theta_hat, beta0, False
    step = cfg.step0
    for _ in range(cfg.max_backtracks):
        cand = _clamp(theta_hat - step * grad, cfg.theta_bounds)
        b = beta(cand, buffer, noise, base, force_model)
        if b <= beta0 - cfg.armijo_c * step * grad * grad:
            return cand, b, True
        step *= cfg.shrink
    return theta_hat, beta0, False


def run_estimator(
    buffer: MeasurementBuffer,
    theta0: float,
    cfg: EstimatorConfig,
    duration: float,
    noise: NoiseModel,
    base: Params,
    force_model: str = "loadcell",
) -> list[EstimateRecord]:
    """Offline replay of the tick schedule over a prerecorded history.

    Ticks fire every 1/rate seconds; each sees only the part of the buffer
    recorded up to its own time and performs one estimator_step.  Ticks with
    no visible measurements are skipped.
    """
    if duration <= 0.0:
        raise ValueError("duration must be > 0")
    records: list[EstimateRecord] = []
    theta = _clamp(theta0, cfg.theta_bounds)
    period = 1.0 / cfg.rate
    n_ticks = int(math.floor(duration / period + 1e-9))
    for k in range(1, n_ticks + 1):
        t = buffer.t0 + k * period
        vis = buffer.visible(t)
        if len(vis) == 0:
            continue
        b = None
        for _ in range(cfg.iters_per_tick):
            theta, b, accepted = estimator_step(theta, vis, noise, cfg, base, force_model)
            if not accepted:
                break
        records.append(EstimateRecord(t=t, theta_hat=theta, beta_value=b))
    return records


class OnlineEstimator:
    """Streaming estimator: buffers data, ticks at the configured rate, and
    publishes (theta_hat, observer state) atomically for the excitation loop.

    The live observer steps forward with each recorded control at the current
    estimate; whenever a tick changes the estimate, the observer state is
    re-derived by a full re-integration at the new value, so the published
    state is always the candidate-model state consistent with theta_hat.
    """

    def __init__(
        self,
        theta0: float,
        noise: NoiseModel,
        cfg: EstimatorConfig,
        base: Params,
        t0: float = 0.0,
        dt: float = 0.01,
        x0=None,
        force_model: str = "loadcell",
    ):
        self.cfg = cfg
        self.noise = noise
        self.base = base
        self.force_model = force_model
        self.buffer = MeasurementBuffer(t0=t0, dt=dt, x0=x0)
        self.theta_hat = _clamp(theta0, cfg.theta_bounds)
        self.records: list[EstimateRecord] = []
        self._xbar = np.concatenate([self.buffer.x0, np.zeros(4)])
        self._next_tick = t0 + 1.0 / cfg.rate

    def record_control(self, u: float) -> None:
        self.buffer.add_control(u)
        p = replace(self.base, ell=self.theta_hat)
        self._xbar = rollout_extended(p, self._xbar, [u], self.buffer.dt).states[-1]

    def record_measurement(self, m: Measurement) -> None:
        self.buffer.add_measurement(m)

    def maybe_tick(self, t: float) -> None:
        while t >= self._next_tick - 1e-9:
            tick_t = self._next_tick
            self._next_tick += 1.0 / self.cfg.rate
            if len(self.buffer) == 0:
                continue
            any_accepted = False
            b = None
            for _ in range(self.cfg.iters_per_tick):
                theta, b, accepted = estimator_step(
                    self.theta_hat, self.buffer, self.noise, self.cfg, self.base, self.force_model
                )
                if not accepted:
                    break
                self.theta_hat = theta
                any_accepted = True
            if any_accepted:
                self._resync_observer()
            self.records.append(EstimateRecord(t=tick_t, theta_hat=self.theta_hat, beta_value=b))

    def current(self) -> tuple[float, np.ndarray]:
        return self.theta_hat, self._xbar.copy()

    def _resync_observer(self) -> None:
        p = replace(self.base, ell=self.theta_hat)
        controls = self.buffer.control_array()
        if len(controls):
            self._xbar = rollout_extended(
                p, np.concatenate([self.buffer.x0, np.zeros(4)]), controls, self.buffer.dt
            ).states[-1]
        else:
            self._xbar = np.concatenate([self.buffer.x0, np.zeros(4)])
