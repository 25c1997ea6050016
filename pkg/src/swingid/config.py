"""Flat key-value configuration files.

Format, one setting per line:

    # comment
    trial.theta0 = 0.448
    sac.Q_tau = 1000, 300, 0, 0
    task.x_desired = -0.45, -0.26, 0, 0

Keys are namespaced by the object they configure (trial.*, noise.*, sac.*,
estimator.*, task.*, success.*) and cover every field of every config type.
Values are floats, integers, booleans (true/false) or comma-separated float
lists.  The 4x4 weight matrices (sac.Q_tau, task.P_tau) accept either 4
values (diagonal) or 16 values (full matrix, row major).  Unknown keys,
duplicates and malformed lines are errors.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .estimator import EstimatorConfig
from .harness import SuccessCriteria, TrialConfig
from .model import NoiseModel
from .sac import SacConfig
from .trajopt import TaskConfig


class ConfigError(ValueError):
    """A configuration file or value that cannot be used."""


def _parse_float(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}") from None


def _parse_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}") from None


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"expected true or false, got {raw!r}")


def _parse_floats(raw: str) -> tuple:
    parts = [p.strip() for p in raw.split(",")]
    if not parts or any(p == "" for p in parts):
        raise ConfigError(f"expected comma-separated numbers, got {raw!r}")
    return tuple(_parse_float(p) for p in parts)


def _parse_str(raw: str) -> str:
    return raw.strip()


KEY_PARSERS = {
    "trial.theta0": _parse_float,
    "trial.use_estimation": _parse_bool,
    "trial.est_duration": _parse_float,
    "trial.quiescent_lead": _parse_float,
    "trial.seed": _parse_int,
    "trial.ell_true": _parse_float,
    "trial.mass": _parse_float,
    "trial.gravity": _parse_float,
    "trial.bias_ref": _parse_floats,
    "trial.bias_span": _parse_float,
    "trial.out_dir": _parse_str,
    "noise.sigma2": _parse_float,
    "sac.horizon_T": _parse_float,
    "sac.loop_dt": _parse_float,
    "sac.Q_tau": _parse_floats,
    "sac.R_sac": _parse_float,
    "sac.gamma_ad": _parse_float,
    "sac.u_max": _parse_float,
    "sac.dt_min": _parse_float,
    "sac.dt_init": _parse_float,
    "sac.eps_info": _parse_float,
    "sac.dt": _parse_float,
    "estimator.rate": _parse_float,
    "estimator.armijo_c": _parse_float,
    "estimator.shrink": _parse_float,
    "estimator.step0": _parse_float,
    "estimator.max_backtracks": _parse_int,
    "estimator.iters_per_tick": _parse_int,
    "estimator.theta_bounds": _parse_floats,
    "task.P_tau": _parse_floats,
    "task.R_tau": _parse_float,
    "task.x_desired": _parse_floats,
    "task.t_f": _parse_float,
    "task.dt": _parse_float,
    "task.tol": _parse_float,
    "task.max_iters": _parse_int,
    "task.armijo_c": _parse_float,
    "task.shrink": _parse_float,
    "task.max_backtracks": _parse_int,
    "task.descent_damping": _parse_float,
    "task.descent_state_damping": _parse_float,
    "task.damping_error_scale": _parse_float,
    "success.x_target": _parse_float,
    "success.x_tol": _parse_float,
    "success.z_rim": _parse_float,
    "success.speed_max": _parse_float,
}


def parse_config(text: str) -> dict:
    """Parse config text into a {key: typed value} mapping."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        parser = KEY_PARSERS.get(key)
        if parser is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = parser(raw.strip())
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
    return values


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _weight_matrix(values: tuple, key: str) -> np.ndarray:
    if len(values) == 4:
        return np.diag(values)
    if len(values) == 16:
        return np.asarray(values, dtype=float).reshape(4, 4)
    raise ConfigError(f"{key} needs 4 (diagonal) or 16 (full) values, got {len(values)}")


def _fixed_length(values: tuple, key: str, n: int) -> tuple:
    if len(values) != n:
        raise ConfigError(f"{key} needs exactly {n} values, got {len(values)}")
    return values


def _group(values: dict, prefix: str) -> dict:
    head = prefix + "."
    return {k[len(head):]: v for k, v in values.items() if k.startswith(head)}


def build_trial_config(values: dict | None = None) -> TrialConfig:
    """Assemble a TrialConfig from parsed key-value settings; missing keys
    keep their defaults.  Domain validation from the config types applies."""
    values = dict(values or {})
    unknown = set(values) - set(KEY_PARSERS)
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")

    sac_kwargs = _group(values, "sac")
    if "Q_tau" in sac_kwargs:
        sac_kwargs["Q_tau"] = _weight_matrix(sac_kwargs["Q_tau"], "sac.Q_tau")
    est_kwargs = _group(values, "estimator")
    if "theta_bounds" in est_kwargs:
        est_kwargs["theta_bounds"] = _fixed_length(
            est_kwargs["theta_bounds"], "estimator.theta_bounds", 2
        )
    task_kwargs = _group(values, "task")
    if "P_tau" in task_kwargs:
        task_kwargs["P_tau"] = _weight_matrix(task_kwargs["P_tau"], "task.P_tau")
    if "x_desired" in task_kwargs:
        task_kwargs["x_desired"] = np.asarray(
            _fixed_length(task_kwargs["x_desired"], "task.x_desired", 4), dtype=float
        )
    trial_kwargs = _group(values, "trial")
    if "bias_ref" in trial_kwargs:
        trial_kwargs["bias_ref"] = _fixed_length(trial_kwargs["bias_ref"], "trial.bias_ref", 4)

    try:
        return TrialConfig(
            noise=NoiseModel(**_group(values, "noise")),
            sac=SacConfig(**sac_kwargs),
            estimator=EstimatorConfig(**est_kwargs),
            task=TaskConfig(**task_kwargs),
            success=SuccessCriteria(**_group(values, "success")),
            **trial_kwargs,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_trial_config(path=None, overrides: dict | None = None) -> TrialConfig:
    """File settings (if any) with CLI-style overrides applied on top."""
    values = {} if path is None else load_config(path)
    for key, value in (overrides or {}).items():
        if key not in KEY_PARSERS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = value
    return build_trial_config(values)
