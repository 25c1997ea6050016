"""Command-line front end: render one figure per invocation.

    plots convergence --in <dir> --out <path> [--true-length L]
    plots xz          --in <dir> --out <path> [--runs a,b] [--target x,z]
    plots endpoint    --in <dir> --out <path>
    plots sweep-table --in <dir> --out <path>

The input directory is a trial or sweep output directory. Exit codes:
0 rendered, 1 schema or data failure, 2 usage errors.
"""

from __future__ import annotations

import argparse
import sys

from .figures import plot_convergence, plot_endpoint, plot_sweep_table, plot_xz_paths
from .loader import SchemaError, collect_bundle


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--in", dest="in_dir", required=True, metavar="DIR",
                        help="trial or sweep log directory")
    common.add_argument("--out", required=True, metavar="PATH", help="output SVG file")

    parser = argparse.ArgumentParser(
        prog="plots", description="Render SVG figures from swing-trial logs."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    conv = sub.add_parser("convergence", parents=[common],
                          help="estimate-vs-time curves, one per trial")
    conv.add_argument("--true-length", type=float, default=0.368, metavar="L",
                      help="dashed reference line position, m (default 0.368)")
    xz = sub.add_parser("xz", parents=[common], help="planned mass paths in the x-z plane")
    xz.add_argument("--runs", metavar="A,B", help="comma-separated run labels to include "
                    "(default: every plan found)")
    xz.add_argument("--target", metavar="X,Z", default="-0.45,-0.26",
                    help="target marker position (default -0.45,-0.26)")
    sub.add_parser("endpoint", parents=[common], help="reference vs executed gripper position")
    sub.add_parser("sweep-table", parents=[common], help="the sweep success table")
    return parser


def _parse_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated numbers, got {text!r}")
    return float(parts[0]), float(parts[1])


def cmd_convergence(args) -> int:
    bundle = collect_bundle(args.in_dir)
    out = plot_convergence(bundle, args.out, true_length=args.true_length)
    print(f"wrote {out} ({len(bundle.estimation)} trial curves)")
    return 0


def cmd_xz(args) -> int:
    bundle = collect_bundle(args.in_dir)
    plans = list(bundle.plans)
    if args.runs is not None:
        wanted = [w.strip() for w in args.runs.split(",") if w.strip()]
        by_label = {p.label: p for p in plans}
        missing = [w for w in wanted if w not in by_label]
        if missing:
            have = sorted(by_label)
            raise SchemaError(f"no plan logs labeled {missing}; available: {have}")
        plans = [by_label[w] for w in wanted]
    try:
        target = _parse_pair(args.target)
    except ValueError as exc:
        print(f"--target: {exc}", file=sys.stderr)
        return 2
    out = plot_xz_paths(plans, args.out, target=target)
    print(f"wrote {out} ({len(plans)} paths)")
    return 0


def cmd_endpoint(args) -> int:
    bundle = collect_bundle(args.in_dir)
    out = plot_endpoint(bundle, args.out)
    print(f"wrote {out}")
    return 0


def cmd_sweep_table(args) -> int:
    bundle = collect_bundle(args.in_dir)
    if bundle.sweep is None:
        raise SchemaError(f"no sweep summary.json under {bundle.root}")
    out = plot_sweep_table(bundle.sweep, args.out)
    print(f"wrote {out} ({len(bundle.sweep.trials)} trials)")
    return 0


COMMANDS = {
    "convergence": cmd_convergence,
    "xz": cmd_xz,
    "endpoint": cmd_endpoint,
    "sweep-table": cmd_sweep_table,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
