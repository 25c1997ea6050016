"""Synthetic log fixtures matching the harness file schema.

Built by hand so the figure package is testable without the trial runner
installed; shapes and key sets mirror what a real run writes.
"""

import json
import math
from pathlib import Path

HEADER = "t,xB,vB,phi,phidot,u,force_meas,force_pred,theta_hat"


def write_estimation_csv(path: Path, theta0: float, n: int = 24, dt: float = 0.25,
                         theta_true: float = 0.368) -> None:
    lines = [HEADER]
    for k in range(n + 1):
        t = k * dt
        theta = theta_true + (theta0 - theta_true) * math.exp(-k / 4.0)
        phi = 0.2 * math.sin(1.5 * t)
        u = "" if k == n else f"{2.0 * math.sin(3.0 * t):.17g}"
        lines.append(
            f"{t:.17g},{0.02 * math.sin(t):.17g},{0.02 * math.cos(t):.17g},"
            f"{phi:.17g},{0.3 * math.cos(1.5 * t):.17g},{u},"
            f"{0.49 + 0.01 * math.sin(t):.17g},{0.49:.17g},{theta:.17g}"
        )
    path.write_text("\n".join(lines) + "\n")


def write_plan_csv(path: Path, length: float, n: int = 40, dt: float = 0.125,
                   x_shift: float = 0.0) -> None:
    lines = [HEADER]
    for k in range(n + 1):
        t = k * dt
        frac = k / n
        xb = x_shift - 0.2 * math.sin(math.pi * frac / 2)
        phi = 1.0 * math.sin(math.pi * frac)
        u = "" if k == n else f"{math.cos(2.0 * t):.17g}"
        lines.append(
            f"{t:.17g},{xb:.17g},{0.0:.17g},{phi:.17g},{0.0:.17g},{u},,,{length:.17g}"
        )
    path.write_text("\n".join(lines) + "\n")


def trial_record(theta0: float, use_estimation: bool, *, success: bool = True,
                 theta_final: float | None = None, error: str | None = None) -> dict:
    return {
        "theta0": theta0,
        "use_estimation": use_estimation,
        "theta_final": theta_final if theta_final is not None else theta0,
        "success": success,
        "terminal_mass": None if error else [-0.45, -0.26, 0.0, 0.0],
        "iters_trajopt": None if error else 134,
        "cost_final": None if error else 0.0123,
        "error": error,
    }


def make_trial_dir(root: Path, theta0: float = 0.448, *, truncate_rollout: int = 0) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    write_estimation_csv(root / "estimation.csv", theta0)
    write_plan_csv(root / "plan.csv", 0.368)
    write_plan_csv(root / "rollout.csv", 0.368)
    if truncate_rollout:
        lines = (root / "rollout.csv").read_text().splitlines()
        (root / "rollout.csv").write_text("\n".join(lines[:-truncate_rollout]) + "\n")
    summary = {"trial": trial_record(theta0, True, theta_final=0.3681)}
    (root / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return root


def make_sweep_dir(root: Path, thetas=(0.308, 0.368, 0.428)) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    trials = []
    for theta0 in thetas:
        with_dir = root / f"with_{theta0:.3f}"
        with_dir.mkdir()
        write_estimation_csv(with_dir / "estimation.csv", theta0)
        write_plan_csv(with_dir / "plan.csv", 0.368)
        write_plan_csv(with_dir / "rollout.csv", 0.368)
        rec_w = trial_record(theta0, True, theta_final=0.368)
        (with_dir / "summary.json").write_text(
            json.dumps({"trial": rec_w}, indent=2) + "\n"
        )
        without_dir = root / f"without_{theta0:.3f}"
        without_dir.mkdir()
        write_plan_csv(without_dir / "plan.csv", theta0)
        write_plan_csv(without_dir / "rollout.csv", theta0)
        rec_wo = trial_record(theta0, False, success=abs(theta0 - 0.368) < 1e-9)
        (without_dir / "summary.json").write_text(
            json.dumps({"trial": rec_wo}, indent=2) + "\n"
        )
        trials.extend([rec_w, rec_wo])
    summary = {"trials": trials, "mean_theta": 0.368, "std_theta": 0.0004}
    (root / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return root
