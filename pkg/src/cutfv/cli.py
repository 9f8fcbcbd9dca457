"""Command line entry point: ``cutfv --test test1 --scheme muscl ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .core import CutFVError, table_to_markdown
from .studies import TEST_NAMES, RunConfig, run

SLOPE_CHOICES = ("central", "forward", "ls", "least_squares", "analytic", "constant")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cutfv",
        description="Convergence studies for mixed explicit-implicit cut-cell schemes.",
    )
    p.add_argument("--config", type=Path, help="flat key=value file; flags override it")
    p.add_argument("--test", choices=TEST_NAMES)
    p.add_argument("--scheme", help="explicit scheme: MUSCL, MUSCLmod or MPRKC")
    p.add_argument("--implicit", help="implicit scheme: trap or ie")
    p.add_argument("--coupling", choices=("mixed", "explicit"))
    p.add_argument("--slopes", choices=SLOPE_CHOICES)
    p.add_argument("--alpha", type=float, help="cut-cell volume fraction (1D tests)")
    p.add_argument("--angle", type=float, help="ramp angle in degrees (2D tests)")
    p.add_argument("--x0", type=float, help="ramp start on the x axis (2D tests)")
    p.add_argument("--nu", type=float, help="CFL number")
    p.add_argument("--levels", help="comma-separated 1/h (1D) or N (2D), doubling")
    p.add_argument("--against", choices=("exact", "wbar"))
    p.add_argument("--extra-layers", type=int, dest="extra_layers")
    p.add_argument("--velocity", help="u or u,v overriding the preset")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dump-fields", action="store_true", default=None, dest="dump_fields")
    p.add_argument("--dump-geometry", action="store_true", default=None, dest="dump_geometry")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    flags = {k: v for k, v in vars(args).items() if k != "config" and v is not None}
    text = args.config.read_text() if args.config is not None else ""
    return RunConfig.from_text(text, **flags)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        table = run(config)
    except (CutFVError, ValueError, OSError) as exc:
        print(f"cutfv: error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(table_to_markdown(table))
    return 0


if __name__ == "__main__":
    sys.exit(main())
