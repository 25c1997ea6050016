"""Command-line front end.

Subcommands: estimate (identification stage only), plan (task optimization
at a given length), trial (full pipeline), sweep (the full initial-guess
grid with and without estimation), check (runtime invariant suites).
Exit codes: 0 on success, 1 when a run fails (optimization failure or a
failed check), 2 on configuration or usage errors.
"""

from __future__ import annotations

import argparse
import math
import sys

from .checks import run_checks
from .config import ConfigError, load_trial_config
from .harness import (
    _plan_log,
    run_estimation,
    run_sweep,
    run_trial,
    sweep_table,
    write_run_log,
)
from .model import DivergenceError, Params
from .trajopt import ConvergenceError, optimize_task
from pathlib import Path


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key-value config file")
    common.add_argument("--seed", type=int, metavar="N", help="noise stream seed")
    common.add_argument("--out", metavar="DIR", help="directory for CSV/JSON logs")
    common.add_argument(
        "--no-estimation", action="store_true", help="skip stage one, plan at theta0"
    )
    common.add_argument("--theta0", type=float, metavar="M", help="initial length estimate, m")

    parser = argparse.ArgumentParser(
        prog="swingid",
        description="Active string-length identification and swing-task execution.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("estimate", parents=[common], help="run the identification stage only")
    plan = sub.add_parser("plan", parents=[common], help="optimize the swing task only")
    plan.add_argument("--length", type=float, required=True, metavar="L",
                      help="string length to plan at, m")
    sub.add_parser("trial", parents=[common], help="estimation, planning and execution")
    sub.add_parser("sweep", parents=[common], help="all initial guesses, with and without estimation")
    sub.add_parser("check", parents=[common], help="runtime invariant suites")
    return parser


def _load_cfg(args):
    overrides = {}
    if args.seed is not None:
        overrides["trial.seed"] = args.seed
    if args.theta0 is not None:
        overrides["trial.theta0"] = args.theta0
    if args.no_estimation:
        overrides["trial.use_estimation"] = False
    if args.out is not None:
        overrides["trial.out_dir"] = args.out
    return load_trial_config(args.config, overrides)


def cmd_estimate(args, cfg) -> int:
    records, theta_hat, _ = run_estimation(cfg)
    print("t      theta_hat   residual_cost")
    for r in records:
        print(f"{r.t:5.2f}  {r.theta_hat:.6f}   {r.beta_value:.4e}")
    print(f"final estimate: {theta_hat:.6f} m (started at {cfg.theta0:.3f} m)")
    return 0


def cmd_plan(args, cfg) -> int:
    length = args.length
    if not (length > 0.0 and math.isfinite(length)):
        print(f"--length must be a positive number, got {length}", file=sys.stderr)
        return 2
    base = Params(ell=length, mass=cfg.mass, gravity=cfg.gravity)
    try:
        plan = optimize_task(length, cfg.task, base=base)
    except (ConvergenceError, DivergenceError) as exc:
        print(f"task optimization failed: {exc}", file=sys.stderr)
        return 1
    terminal = plan.trajectory.mass[-1]
    print(f"converged in {plan.iterations} iterations, cost {plan.cost:.6f}, "
          f"|descent| {abs(plan.dj):.3e}")
    print(f"predicted terminal mass: x={terminal[0]:+.4f} m  z={terminal[1]:+.4f} m  "
          f"speed={math.hypot(terminal[2], terminal[3]):.4f} m/s")
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_run_log(_plan_log(plan, length), out / "plan.csv")
        print(f"wrote {out / 'plan.csv'}")
    return 0


def cmd_trial(args, cfg) -> int:
    result = run_trial(cfg)
    if cfg.use_estimation:
        print(f"estimation: theta0 {cfg.theta0:.3f} m -> theta_hat "
              f"{result.theta_final:.6f} m ({len(result.records)} updates)")
    else:
        print(f"estimation skipped; planning at theta0 {cfg.theta0:.3f} m")
    if result.error is not None:
        print(f"error: {result.error}", file=sys.stderr)
        return 1
    plan = result.plan
    print(f"plan: {plan.iterations} iterations, cost {plan.cost:.6f}, "
          f"|descent| {abs(plan.dj):.3e}")
    tm = result.terminal_mass
    print(f"terminal mass: x={tm[0]:+.4f} m  z={tm[1]:+.4f} m  "
          f"speed={math.hypot(tm[2], tm[3]):.4f} m/s")
    print(f"success: {result.success}")
    return 0


def cmd_sweep(args, cfg) -> int:
    result = run_sweep(cfg, out_dir=cfg.out_dir)
    print(sweep_table(result))
    return 0


def cmd_check(args, cfg) -> int:
    results = run_checks(cfg)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 0 if not failed else 1


COMMANDS = {
    "estimate": cmd_estimate,
    "plan": cmd_plan,
    "trial": cmd_trial,
    "sweep": cmd_sweep,
    "check": cmd_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_cfg(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, cfg)
    except DivergenceError as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
