"""Batch figure generation: `scoreflow-plots {convergence|density} --in ... --out ...`"""

from __future__ import annotations

import argparse
import sys

from .figures import plot_convergence, plot_density_panels


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scoreflow-plots",
        description="Render convergence curves and density panels from harness CSV outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="log-log error curves with fitted slopes")
    p.add_argument("--in", dest="input", required=True, help="results CSV path")
    p.add_argument("--out", dest="output", required=True, help="output figure base path")
    p.add_argument("--x", choices=("delta", "h"), default=None,
                   help="x axis (default: delta when swept, else h)")

    p = sub.add_parser("density", help="snapshot density panel grid")
    p.add_argument("--in", dest="input", required=True, help="directory of snapshot CSVs")
    p.add_argument("--out", dest="output", required=True, help="output figure base path")
    p.add_argument("--source", choices=("ode", "pde"), default="ode")
    p.add_argument("--deltas", type=float, nargs="+", default=None)
    p.add_argument("--times", type=float, nargs="+", default=None)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "convergence":
            report = plot_convergence(args.input, args.output, x_name=args.x)
            for s in report.series:
                print(f"{s.metric} d={s.d} vs {s.x}: slope {s.slope:.3f} ({s.n_points} points)")
            for path in report.figure_paths:
                print(path)
        else:
            for path in plot_density_panels(
                args.input, args.output, source=args.source, deltas=args.deltas, times=args.times
            ):
                print(path)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
