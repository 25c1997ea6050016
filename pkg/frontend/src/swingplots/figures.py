"""The four figure renderers.

Each takes validated log objects, assembles an SVG string, and only then
writes the output file, so a schema failure never leaves a partial file.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .loader import LogBundle, RunLog, SchemaError, SweepSummary
from .style import DEFAULT_STYLE, Style
from .svg import HLine, Marker, Series, build_chart, document, line, rect, text


def _write(out_path, svg: str) -> Path:
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(svg.encode("utf-8"))
    return out


def _finite_column(run: RunLog, name: str) -> np.ndarray:
    col = run.column(name)
    if not np.isfinite(col).any():
        raise SchemaError(f"{run.path}: column {name!r} has no finite values")
    return col


def plot_convergence(
    bundle: LogBundle,
    out_path,
    *,
    true_length: float = 0.368,
    style: Style = DEFAULT_STYLE,
) -> Path:
    """Estimate-vs-time curves, one per trial, with the true length dashed."""
    if not bundle.estimation:
        raise SchemaError(f"no estimation logs under {bundle.root}")
    series = []
    for i, run in enumerate(bundle.estimation):
        _finite_column(run, "theta_hat")
        series.append(
            Series(
                x=run.column("t"),
                y=run.column("theta_hat"),
                color=style.color(i),
                label=run.label,
                width=style.line_width,
            )
        )
    svg = build_chart(
        title="Length estimate convergence",
        x_label="time (s)",
        y_label="estimated length (m)",
        series=series,
        hlines=(HLine(true_length, style.frame_color, f"true length {true_length:g} m", style.dash),),
        style=style,
    )
    return _write(out_path, svg)


def _mass_path(run: RunLog) -> tuple[np.ndarray, np.ndarray]:
    """The mass x-z path implied by a run log: the string length is read from
    the log's own theta_hat column (a plan is drawn with its assumed length)."""
    theta = _finite_column(run, "theta_hat")
    ell = float(theta[np.isfinite(theta)][0])
    if not ell > 0.0:
        raise SchemaError(f"{run.path}: theta_hat must be positive, got {ell}")
    xb = run.column("xB")
    phi = run.column("phi")
    return xb + ell * np.sin(phi), -ell * np.cos(phi)


def plot_xz_paths(
    plans: Sequence[RunLog],
    out_path,
    *,
    target: tuple[float, float] = (-0.45, -0.26),
    style: Style = DEFAULT_STYLE,
) -> Path:
    """Planned mass paths in the x-z plane with the target point marked."""
    if not plans:
        raise SchemaError("no planned trajectories to draw")
    series = []
    for i, run in enumerate(plans):
        x, z = _mass_path(run)
        series.append(
            Series(x=x, y=z, color=style.color(i), label=run.label, width=style.line_width)
        )
    svg = build_chart(
        title="Planned mass path",
        x_label="mass x (m)",
        y_label="mass z (m)",
        series=series,
        markers=(Marker(target[0], target[1], "#111111", "target"),),
        style=style,
    )
    return _write(out_path, svg)


def plot_endpoint(bundle: LogBundle, out_path, *, style: Style = DEFAULT_STYLE) -> Path:
    """Planned (reference) vs executed gripper position over the task."""
    if len(bundle.plans) != 1 or len(bundle.rollouts) != 1:
        raise SchemaError(
            f"endpoint figure needs exactly one plan.csv and one rollout.csv under "
            f"{bundle.root}; found {len(bundle.plans)} plan(s), {len(bundle.rollouts)} rollout(s)"
        )
    plan, roll = bundle.plans[0], bundle.rollouts[0]
    if len(roll) != len(plan):
        raise SchemaError(
            f"{roll.path} has {len(roll)} rows but {plan.path} has {len(plan)}"
        )
    series = [
        Series(
            x=plan.column("t"),
            y=plan.column("xB"),
            color=style.color(0),
            label="reference",
            width=style.line_width + 0.8,
        ),
        Series(
            x=roll.column("t"),
            y=roll.column("xB"),
            color=style.color(1),
            label="executed",
            width=style.line_width,
            dash="4,3",
        ),
    ]
    svg = build_chart(
        title="Gripper endpoint tracking",
        x_label="time (s)",
        y_label="gripper position (m)",
        series=series,
        style=style,
    )
    return _write(out_path, svg)


def plot_sweep_table(summary: SweepSummary, out_path, *, style: Style = DEFAULT_STYLE) -> Path:
    """The success table: one row per initial guess, both arms, plus stats."""
    if not summary.trials:
        raise SchemaError("sweep summary contains no trials")
    arms: dict[float, dict[bool, object]] = {}
    for t in summary.trials:
        arms.setdefault(t.theta0, {})[t.use_estimation] = t
    rows = sorted(arms)
    st = style
    row_h = 22.0
    header_h = 30.0
    top = st.margin_top
    table_h = header_h + row_h * len(rows)
    cols = (st.margin_left, st.width * 0.42, st.width * 0.70)
    ok_color, fail_color = "#2d6a4f", "#9d0208"

    body = text(cols[0], top - 16, "Sweep success table", st.title_size, st.text_color)
    body += rect(cols[0] - 8, top, st.width - cols[0] - st.margin_right + 8, header_h, "#f2f2f2")
    y = top + 19
    body += text(cols[0], y, "initial guess (m)", st.font_size, st.text_color)
    body += text(cols[1], y, "with estimation", st.font_size, st.text_color)
    body += text(cols[2], y, "without estimation", st.font_size, st.text_color)
    for i, theta0 in enumerate(rows):
        y = top + header_h + (i + 1) * row_h - 6
        body += text(cols[0], y, f"{theta0:.3f}", st.font_size, st.text_color)
        for col_x, arm in ((cols[1], True), (cols[2], False)):
            t = arms[theta0].get(arm)
            if t is None:
                body += text(col_x, y, "-", st.font_size, st.muted_color)
            elif t.error is not None:
                body += text(col_x, y, "error", st.font_size, fail_color)
            else:
                word = "success" if t.success else "fail"
                body += text(col_x, y, word, st.font_size, ok_color if t.success else fail_color)
    y_sep = top + table_h + 8
    body += line(cols[0] - 8, top + header_h, st.width - st.margin_right, top + header_h, st.frame_color, 0.8)
    body += line(cols[0] - 8, y_sep, st.width - st.margin_right, y_sep, st.frame_color, 0.5)
    body += text(
        cols[0],
        y_sep + 18,
        f"final estimates: mean {summary.mean_theta:.4f} m, std {summary.std_theta:.4f} m",
        st.font_size,
        st.muted_color,
    )
    needed = y_sep + 34 + st.margin_bottom
    if needed > st.height:
        st = replace(st, height=needed)
    return _write(out_path, document(st, body))
