"""Swing-task planning by projection-based trajectory optimization.

The task: starting from rest, swing the suspended mass so that at the final
time it reaches a desired Cartesian point with near-zero velocity.  The cost
is a terminal quadratic on the mass position/velocity error plus a running
quadratic control effort.  Each iteration linearizes the discrete dynamics
along the current feasible trajectory, solves a time-varying LQ problem
backward (a Riccati recursion) for a descent direction and feedback gains,
line searches along that direction, and maps the perturbed curve back onto
the feasible set by closed-loop forward simulation (the projection).

The pendulum is planned in minimal coordinates (gripper position, string
angle), so the fixed string length holds identically; the Cartesian mass
channels are derived through the kinematic map and only enter the cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import DivergenceError, Params, Trajectory, dynamics, rk4_step


def _default_p_tau() -> np.ndarray:
    return np.diag([200.0, 200.0, 20.0, 20.0])


def _default_target() -> np.ndarray:
    # box center 0.45 m to the left of the gripper line, rim just below the
    # approach height, zero terminal velocity
    return np.array([-0.45, -0.26, 0.0, 0.0])


@dataclass(frozen=True)
class TaskConfig:
    """Weights, target, horizon and optimizer settings for the swing task.

    P_tau weighs the terminal mass Cartesian error (x, z, xdot, zdot);
    R_tau weighs control effort.  The descent_damping / descent_state_damping
    weights regularize the LQ model that shapes descent directions (the task
    cost itself has almost no curvature in most control directions, so the
    undamped model proposes steps the nonlinear dynamics cannot honor); both
    fade out linearly once the terminal error norm falls below
    damping_error_scale, where the terminal quadratic model is trustworthy.
    """

    P_tau: np.ndarray = field(default_factory=_default_p_tau)
    R_tau: float = 0.1
    x_desired: np.ndarray = field(default_factory=_default_target)
    t_f: float = 5.0
    dt: float = 0.01
    tol: float = 1e-6
    max_iters: int = 200
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    descent_damping: float = 1.0
    descent_state_damping: float = 0.1
    damping_error_scale: float = 0.03

    def __post_init__(self):
        object.__setattr__(self, "P_tau", np.asarray(self.P_tau, dtype=float))
        object.__setattr__(self, "x_desired", np.asarray(self.x_desired, dtype=float))
        P = self.P_tau
        if P.shape != (4, 4) or not np.allclose(P, P.T):
            raise ValueError("P_tau must be symmetric 4x4")
        if np.any(np.linalg.eigvalsh(P) < -1e-12):
            raise ValueError("P_tau must be positive semidefinite")
        if self.R_tau <= 0.0:
            raise ValueError("R_tau must be > 0")
        if self.x_desired.shape != (4,):
            raise ValueError("x_desired must have shape (4,)")
        if not (self.t_f > self.dt > 0.0):
            raise ValueError("need t_f > dt > 0")
        if self.tol <= 0.0:
            raise ValueError("tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (0.0 < self.armijo_c < 1.0):
            raise ValueError("armijo_c must be in (0, 1)")
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink must be in (0, 1)")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be >= 1")
        if self.descent_damping < 0.0 or self.descent_state_damping < 0.0:
            raise ValueError("descent damping weights must be >= 0")
        if self.damping_error_scale <= 0.0:
            raise ValueError("damping_error_scale must be > 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_f / self.dt))


@dataclass(frozen=True)
class TaskTrajectory:
    """A dynamically feasible plan plus its derived mass Cartesian channels."""

    traj: Trajectory
    mass: np.ndarray
    theta: float

    def __post_init__(self):
        if self.mass.shape != self.traj.states.shape:
            raise ValueError("mass channels must match the state grid")


@dataclass(frozen=True)
class DescentDirection:
    """LQ solution: state/control perturbation curves, the directional
    derivative of the task cost along them, and the feedback gains."""

    z: np.ndarray
    v: np.ndarray
    dj: float
    gains: np.ndarray


@dataclass(frozen=True)
class TaskPlan:
    """Optimizer output: the plan, its cost, the terminal descent magnitude,
    the accepted-iteration count and the cost sequence."""

    trajectory: TaskTrajectory
    cost: float
    dj: float
    iterations: int
    cost_history: tuple[float, ...]


class ConvergenceError(RuntimeError):
    """Optimization stopped without meeting the descent tolerance."""

    def __init__(self, trajectory: TaskTrajectory, dj: float, iterations: int):
        self.trajectory = trajectory
        self.dj = dj
        self.iterations = iterations
        super().__init__(
            f"no convergence after {iterations} iterations, |descent| = {abs(dj):.3e}"
        )


def mass_kinematics(s, p: Params) -> np.ndarray:
    """Cartesian mass position and velocity for states s (shape (..., 4)).

    x_m = xB + ell sin(phi), z_m = -ell cos(phi), measured from the gripper
    line; velocities are the exact time derivatives.
    """
    s = np.asarray(s, dtype=float)
    phi = s[..., 2]
    phidot = s[..., 3]
    ell = p.ell
    return np.stack(
        [
            s[..., 0] + ell * np.sin(phi),
            -ell * np.cos(phi),
            s[..., 1] + ell * np.cos(phi) * phidot,
            ell * np.sin(phi) * phidot,
        ],
        axis=-1,
    )


def _mass_jacobian(s: np.ndarray, p: Params) -> np.ndarray:
    """Jacobian of mass_kinematics with respect to the state at one point."""
    ell = p.ell
    phi, phidot = s[2], s[3]
    sin, cos = math.sin(phi), math.cos(phi)
    return np.array(
        [
            [1.0, 0.0, ell * cos, 0.0],
            [0.0, 0.0, ell * sin, 0.0],
            [0.0, 1.0, -ell * sin * phidot, ell * cos],
            [0.0, 0.0, ell * cos * phidot, ell * sin],
        ]
    )


def make_task_trajectory(traj: Trajectory, p: Params) -> TaskTrajectory:
    """Attach the derived mass channels to a feasible trajectory."""
    return TaskTrajectory(traj=traj, mass=mass_kinematics(traj.states, p), theta=p.ell)


def _require_on_grid(xi: TaskTrajectory, cfg: TaskConfig) -> None:
    if xi.traj.n_steps != cfg.n_steps or abs(xi.traj.dt - cfg.dt) > 1e-12:
        raise ValueError(
            f"trajectory grid ({xi.traj.n_steps} steps of {xi.traj.dt}) does not "
            f"match config ({cfg.n_steps} steps of {cfg.dt})"
        )


def task_cost(xi: TaskTrajectory, cfg: TaskConfig) -> float:
    """Terminal mass-error quadratic plus integrated control effort."""
    _require_on_grid(xi, cfg)
    e = xi.mass[-1] - cfg.x_desired
    u = xi.traj.controls
    return float(e @ cfg.P_tau @ e + cfg.R_tau * cfg.dt * np.sum(u * u))


def _stage_rates(states: np.ndarray, u: np.ndarray, p: Params) -> np.ndarray:
    out = np.empty_like(states)
    out[:, 0] = states[:, 1]
    out[:, 1] = u
    out[:, 2] = states[:, 3]
    out[:, 3] = (u * np.cos(states[:, 2]) - p.gravity * np.sin(states[:, 2])) / p.ell
    return out


def _stage_fx(states: np.ndarray, u: np.ndarray, p: Params) -> np.ndarray:
    J = np.zeros((len(states), 4, 4))
    J[:, 0, 1] = 1.0
    J[:, 2, 3] = 1.0
    J[:, 3, 2] = (-u * np.sin(states[:, 2]) - p.gravity * np.cos(states[:, 2])) / p.ell
    return J


def _stage_fu(states: np.ndarray, p: Params) -> np.ndarray:
    B = np.zeros((len(states), 4))
    B[:, 1] = 1.0
    B[:, 3] = np.cos(states[:, 2]) / p.ell
    return B


def linearize(xi: TaskTrajectory, p: Params) -> tuple[np.ndarray, np.ndarray]:
    """Exact Jacobians (A_k, B_k) of the one-step integrator along xi.

    Differentiates the fixed-step fourth-order update through its stages, so
    A_k = d x_{k+1} / d x_k and B_k = d x_{k+1} / d u_k hold to machine
    precision for the shared integrator.
    """
    x = xi.traj.states[:-1]
    u = xi.traj.controls
    dt = xi.traj.dt
    k1 = _stage_rates(x, u, p)
    x2 = x + 0.5 * dt * k1
    k2 = _stage_rates(x2, u, p)
    x3 = x + 0.5 * dt * k2
    k3 = _stage_rates(x3, u, p)
    x4 = x + dt * k3
    eye = np.eye(4)
    J1 = _stage_fx(x, u, p)
    J2 = _stage_fx(x2, u, p)
    J3 = _stage_fx(x3, u, p)
    J4 = _stage_fx(x4, u, p)
    A1 = J1
    A2 = J2 @ (eye + 0.5 * dt * A1)
    A3 = J3 @ (eye + 0.5 * dt * A2)
    A4 = J4 @ (eye + dt * A3)
    A = eye + (dt / 6.0) * (A1 + 2.0 * A2 + 2.0 * A3 + A4)

    def mv(J, b):
        return (J @ b[..., None])[..., 0]

    B1 = _stage_fu(x, p)
    B2 = _stage_fu(x2, p) + 0.5 * dt * mv(J2, B1)
    B3 = _stage_fu(x3, p) + 0.5 * dt * mv(J3, B2)
    B4 = _stage_fu(x4, p) + dt * mv(J4, B3)
    B = (dt / 6.0) * (B1 + 2.0 * B2 + 2.0 * B3 + B4)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise DivergenceError(0, "non-finite linearization")
    return A, B


def lq_recursion(
    A: np.ndarray,
    B: np.ndarray,
    r_weight: float,
    b_lin: np.ndarray,
    P_terminal: np.ndarray,
    a_terminal: np.ndarray,
    q_weight: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backward Riccati recursion for a scalar-control time-varying LQ step.

    Minimizes sum_k (b_lin_k v_k + 1/2 r_weight v_k^2 + 1/2 z_k' Q z_k) plus
    the terminal expansion a_terminal' z_N + 1/2 z_N' P_terminal z_N subject
    to z_{k+1} = A_k z_k + B_k v_k.  Returns (gains, feedforward, P_0, r_0);
    the minimizing perturbation is v_k = feedforward_k + gains_k . z_k.
    """
    n_steps = len(A)
    dim = A.shape[1]
    Q = np.zeros((dim, dim)) if q_weight is None else np.asarray(q_weight, dtype=float)
    gains = np.empty((n_steps, dim))
    feed = np.empty(n_steps)
    P = np.asarray(P_terminal, dtype=float).copy()
    r = np.asarray(a_terminal, dtype=float).copy()
    for k in range(n_steps - 1, -1, -1):
        Ak, Bk = A[k], B[k]
        PB = P @ Bk
        h_uu = r_weight + Bk @ PB
        g_u = b_lin[k] + Bk @ r
        gains[k] = -(PB @ Ak) / h_uu
        feed[k] = -g_u / h_uu
        APB = Ak.T @ PB
        P = Q + Ak.T @ P @ Ak - np.outer(APB, APB) / h_uu
        P = 0.5 * (P + P.T)
        r = Ak.T @ r + APB * feed[k]
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(r))):
            raise DivergenceError(k, "Riccati recursion lost finiteness")
    return gains, feed, P, r


def lq_descent(xi: TaskTrajectory, cfg: TaskConfig, p: Params) -> DescentDirection:
    """Descent direction from the damped local LQ model of the task cost.

    The linear terms are the exact cost expansion, so dj is the true
    directional derivative along the returned perturbation whatever the
    damping; the damping only shapes the metric.  Far from the target the
    full damping tames the near-singular terminal-only curvature; it fades
    linearly with the terminal error norm so the final approach behaves like
    an undamped least-squares step.
    """
    _require_on_grid(xi, cfg)
    A, B = linearize(xi, p)
    M = _mass_jacobian(xi.traj.states[-1], p)
    e = xi.mass[-1] - cfg.x_desired
    a_terminal = 2.0 * M.T @ (cfg.P_tau @ e)
    P_terminal = 2.0 * M.T @ cfg.P_tau @ M
    b_lin = 2.0 * cfg.R_tau * cfg.dt * xi.traj.controls
    fade = min(1.0, float(np.linalg.norm(e)) / cfg.damping_error_scale)
    r_weight = 2.0 * cfg.R_tau * cfg.dt + cfg.descent_damping * fade
    q_weight = cfg.descent_state_damping * fade * cfg.dt * np.eye(4)
    gains, feed, _, _ = lq_recursion(
        A, B, r_weight, b_lin, P_terminal, a_terminal, q_weight=q_weight
    )
    n = cfg.n_steps
    z = np.zeros((n + 1, 4))
    v = np.empty(n)
    for k in range(n):
        v[k] = feed[k] + gains[k] @ z[k]
        z[k + 1] = A[k] @ z[k] + B[k] * v[k]
    dj = float(b_lin @ v + a_terminal @ z[-1])
    return DescentDirection(z=z, v=v, dj=dj, gains=gains)


def project(
    alpha: np.ndarray,
    mu: np.ndarray,
    ref: TaskTrajectory,
    p: Params,
    cfg: TaskConfig,
    gains: np.ndarray | None = None,
) -> TaskTrajectory:
    """Map a (state curve, control curve) pair to a feasible trajectory.

    Forward-simulates u_k = mu_k + K_k (alpha_k - x_k) from the reference
    initial state, with feedback gains from the reference's Riccati pass
    (recomputed when not supplied).  Feeding a feasible trajectory's own
    states and controls back through is the identity.
    """
    _require_on_grid(ref, cfg)
    if gains is None:
        gains = lq_descent(ref, cfg, p).gains
    alpha = np.asarray(alpha, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n = cfg.n_steps
    if alpha.shape != (n + 1, 4) or mu.shape != (n,):
        raise ValueError("projection curves must live on the config grid")

    def rhs(s, u):
        return dynamics(s, u, p)

    states = np.empty((n + 1, 4))
    controls = np.empty(n)
    x = ref.traj.states[0].copy()
    states[0] = x
    for k in range(n):
        u = mu[k] + gains[k] @ (alpha[k] - x)
        controls[k] = u
        x = rk4_step(rhs, x, u, cfg.dt)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(k, "projection rollout diverged")
        states[k + 1] = x
    traj = Trajectory(t0=ref.traj.t0, dt=cfg.dt, states=states, controls=controls)
    return make_task_trajectory(traj, p)


def optimize_task(
    theta_hat: float,
    cfg: TaskConfig | None = None,
    base: Params | None = None,
) -> TaskPlan:
    """Plan the swing at the given string length estimate.

    Starts from the stationary zero-control trajectory and alternates
    descent-direction computation, Armijo line search and projection until
    the directional derivative magnitude falls below cfg.tol.  Every iterate
    is feasible and the accepted cost sequence is non-increasing.  Raises
    ConvergenceError (carrying the last iterate and descent magnitude) if
    the tolerance is not reached within cfg.max_iters accepted steps or the
    line search stalls.
    """
    cfg = TaskConfig() if cfg is None else cfg
    p = Params(ell=float(theta_hat)) if base is None else replace(base, ell=float(theta_hat))
    n = cfg.n_steps
    traj0 = Trajectory(t0=0.0, dt=cfg.dt, states=np.zeros((n + 1, 4)), controls=np.zeros(n))
    xi = make_task_trajectory(traj0, p)
    cost = task_cost(xi, cfg)
    history = [cost]
    desc = lq_descent(xi, cfg, p)
    for iteration in range(cfg.max_iters):
        if abs(desc.dj) < cfg.tol:
            return TaskPlan(
                trajectory=xi,
                cost=cost,
                dj=desc.dj,
                iterations=iteration,
                cost_history=tuple(history),
            )
        gamma = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            cand = project(
                xi.traj.states + gamma * desc.z,
                xi.traj.controls + gamma * desc.v,
                xi,
                p,
                cfg,
                gains=desc.gains,
            )
            cand_cost = task_cost(cand, cfg)
            if cand_cost <= cost + cfg.armijo_c * gamma * desc.dj:
                xi, cost, accepted = cand, cand_cost, True
                break
            gamma *= cfg.shrink
        if not accepted:
            raise ConvergenceError(xi, desc.dj, iteration)
        history.append(cost)
        desc = lq_descent(xi, cfg, p)
    if abs(desc.dj) < cfg.tol:
        return TaskPlan(
            trajectory=xi,
            cost=cost,
            dj=desc.dj,
            iterations=cfg.max_iters,
            cost_history=tuple(history),
        )
    raise ConvergenceError(xi, desc.dj, cfg.max_iters)
