"""Loading and schema validation of trial run logs.

A run log is a CSV with a fixed header; a trial summary is a JSON object
with one ``trial`` record; a sweep summary adds per-trial records plus the
estimate statistics. Everything is validated on load so the figure code can
assume well-formed inputs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RUN_COLUMNS = (
    "t",
    "xB",
    "vB",
    "phi",
    "phidot",
    "u",
    "force_meas",
    "force_pred",
    "theta_hat",
)

TRIAL_KEYS = frozenset(
    {
        "theta0",
        "use_estimation",
        "theta_final",
        "success",
        "terminal_mass",
        "iters_trajopt",
        "cost_final",
        "error",
    }
)

SWEEP_KEYS = frozenset({"trials", "mean_theta", "std_theta"})


class SchemaError(ValueError):
    """A log file does not match the expected layout."""


@dataclass(frozen=True)
class RunLog:
    """One parsed CSV run log: named float columns, NaN for empty cells."""

    path: Path
    label: str
    columns: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.columns["t"])

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise KeyError(f"{self.path} has no column {name!r}")
        return self.columns[name]


@dataclass(frozen=True)
class TrialSummary:
    theta0: float
    use_estimation: bool
    theta_final: float
    success: bool
    terminal_mass: tuple[float, float, float, float] | None
    iters_trajopt: int | None
    cost_final: float | None
    error: str | None


@dataclass(frozen=True)
class SweepSummary:
    trials: tuple[TrialSummary, ...]
    mean_theta: float
    std_theta: float


@dataclass(frozen=True)
class LogBundle:
    """Every log found under one directory (the directory itself plus its
    immediate subdirectories, in sorted order)."""

    root: Path
    estimation: tuple[RunLog, ...]
    plans: tuple[RunLog, ...]
    rollouts: tuple[RunLog, ...]
    trial: TrialSummary | None
    sweep: SweepSummary | None


def _cell_to_float(cell: str, path: Path, line_no: int, col: str) -> float:
    if cell == "":
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise SchemaError(
            f"{path}, line {line_no}: column {col!r} has non-numeric value {cell!r}"
        ) from None


def load_run_csv(path, label: str | None = None) -> RunLog:
    """Parse and validate one run CSV.

    The header must match the run-log schema exactly; every cell must be a
    float or empty (empty reads as NaN); at least one data row is required.
    """
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"run log {path} does not exist")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        if tuple(header) != RUN_COLUMNS:
            raise SchemaError(
                f"{path} header {header} does not match {list(RUN_COLUMNS)}"
            )
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(RUN_COLUMNS):
                raise SchemaError(
                    f"{path}, line {line_no}: expected {len(RUN_COLUMNS)} cells, got {len(row)}"
                )
            rows.append(
                [
                    _cell_to_float(cell, path, line_no, col)
                    for cell, col in zip(row, RUN_COLUMNS)
                ]
            )
    if not rows:
        raise SchemaError(f"{path} has a header but no data rows")
    data = np.asarray(rows, dtype=float)
    columns = {name: data[:, i] for i, name in enumerate(RUN_COLUMNS)}
    return RunLog(path=path, label=label or path.parent.name, columns=columns)


def _require_keys(obj: dict, keys: frozenset, path: Path, what: str) -> None:
    got = set(obj)
    if got != keys:
        missing = sorted(keys - got)
        extra = sorted(got - keys)
        raise SchemaError(
            f"{path}: {what} keys mismatch (missing {missing}, unexpected {extra})"
        )


def _as_trial(obj, path: Path) -> TrialSummary:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: trial record is not an object")
    _require_keys(obj, TRIAL_KEYS, path, "trial record")
    tm = obj["terminal_mass"]
    if tm is not None:
        if not (isinstance(tm, list) and len(tm) == 4):
            raise SchemaError(f"{path}: terminal_mass must be null or 4 numbers")
        tm = tuple(float(v) for v in tm)
    try:
        return TrialSummary(
            theta0=float(obj["theta0"]),
            use_estimation=bool(obj["use_estimation"]),
            theta_final=float(obj["theta_final"]),
            success=bool(obj["success"]),
            terminal_mass=tm,
            iters_trajopt=None if obj["iters_trajopt"] is None else int(obj["iters_trajopt"]),
            cost_final=None if obj["cost_final"] is None else float(obj["cost_final"]),
            error=None if obj["error"] is None else str(obj["error"]),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed trial record: {exc}") from None


def load_summary(path) -> TrialSummary | SweepSummary:
    """Load a summary JSON; the key set decides trial vs sweep shape."""
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"summary {path} does not exist")
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: top level is not an object")
    if set(obj) == {"trial"}:
        return _as_trial(obj["trial"], path)
    if set(obj) == SWEEP_KEYS:
        if not isinstance(obj["trials"], list):
            raise SchemaError(f"{path}: trials must be a list")
        return SweepSummary(
            trials=tuple(_as_trial(t, path) for t in obj["trials"]),
            mean_theta=float(obj["mean_theta"]),
            std_theta=float(obj["std_theta"]),
        )
    raise SchemaError(
        f"{path}: unrecognized summary shape with keys {sorted(obj)}"
    )


def _scan_dir(d: Path, label: str, bundle_parts) -> None:
    est, plans, rolls = bundle_parts
    f = d / "estimation.csv"
    if f.is_file():
        est.append(load_run_csv(f, label=label))
    f = d / "plan.csv"
    if f.is_file():
        plans.append(load_run_csv(f, label=label))
    f = d / "rollout.csv"
    if f.is_file():
        rolls.append(load_run_csv(f, label=label))


def collect_bundle(root) -> LogBundle:
    """Gather every log under ``root`` and its immediate subdirectories."""
    root = Path(root)
    if not root.is_dir():
        raise SchemaError(f"log directory {root} does not exist")
    est: list[RunLog] = []
    plans: list[RunLog] = []
    rolls: list[RunLog] = []
    _scan_dir(root, root.name, (est, plans, rolls))
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        _scan_dir(sub, sub.name, (est, plans, rolls))
    trial = None
    sweep = None
    summary_path = root / "summary.json"
    if summary_path.is_file():
        summary = load_summary(summary_path)
        if isinstance(summary, TrialSummary):
            trial = summary
        else:
            sweep = summary
    return LogBundle(
        root=root,
        estimation=tuple(est),
        plans=tuple(plans),
        rollouts=tuple(rolls),
        trial=trial,
        sweep=sweep,
    )
