"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .experiment import (
    ConfigError,
    load_config,
    run_ode_experiment,
    run_pde_experiment,
    run_sample_dump,
)
from .fv1d import CflError
from .integrator import TABLEAUS, IntegrationError, estimate_order, get_tableau

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

OUT_DIR_ENV = "SCOREFLOW_OUT"


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config master seed")
    common.add_argument("--threads", type=int, default=1, help="concurrent sweep cells")
    common.add_argument("--out", default=None, help="output directory (overrides config)")

    parser = argparse.ArgumentParser(
        prog="scoreflow",
        description="Deterministic reverse-flow sampling of Gaussian-mixture targets "
        "with convergence measurement.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", parents=[common], help="run a particle sweep from a JSON config")
    p.add_argument("config", help="path to the experiment JSON config")

    p = sub.add_parser("fp1d", parents=[common], help="run the 1D mean-field transport solve")
    p.add_argument("config", help="path to the experiment JSON config")

    p = sub.add_parser("rk-verify", parents=[common], help="empirical integrator order report")
    p.add_argument("--tableau", default=None, help="tableau name (default: all registered)")

    p = sub.add_parser("sample", parents=[common], help="dump raw final-particle coordinates")
    p.add_argument("config", help="path to the experiment JSON config")

    return parser


def _resolve_out(args) -> str | None:
    if args.out is not None:
        return args.out
    return os.environ.get(OUT_DIR_ENV) or None


def _load(args):
    return load_config(args.config, seed=args.seed, out_dir=_resolve_out(args))


def _print_record(record, label: str) -> None:
    print(f"{label}: {len(record.rows)} rows -> {record.csv_path}")
    for fit in record.fits:
        print(
            f"  {fit['metric']} vs {fit['x']}: slope {fit['slope']:.4f} "
            f"(r2 {fit['r2']:.4f}, {fit['cells']} cells)"
        )
    if record.failures:
        print(f"  {record.failures} cell(s) failed numerically", file=sys.stderr)


def _cmd_experiment(args) -> int:
    record = run_ode_experiment(_load(args), threads=max(1, args.threads))
    _print_record(record, "experiment")
    return EXIT_NUMERICAL if record.failures else EXIT_OK


def _cmd_fp1d(args) -> int:
    record = run_pde_experiment(_load(args))
    _print_record(record, "fp1d")
    return EXIT_NUMERICAL if record.failures else EXIT_OK


def _cmd_rk_verify(args) -> int:
    if args.tableau is not None:
        try:
            tableaus = [get_tableau(args.tableau)]
        except KeyError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        tableaus = list(TABLEAUS.values())
    for tableau in tableaus:
        estimate = estimate_order(tableau)
        if estimate.exact:
            print(f"{tableau.name}: exact on this problem (nominal order {tableau.order})")
        else:
            print(
                f"{tableau.name}: measured order {estimate.slope:.4f} "
                f"(nominal {tableau.order})"
            )
    return EXIT_OK


def _cmd_sample(args) -> int:
    paths = run_sample_dump(_load(args))
    for path in paths:
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "experiment": _cmd_experiment,
        "fp1d": _cmd_fp1d,
        "rk-verify": _cmd_rk_verify,
        "sample": _cmd_sample,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, CflError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
