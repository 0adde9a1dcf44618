"""Command-line front end: jiqlab-report --in DIR --out DIR --figs LIST.

Exit codes mirror the simulator CLI: 0 success, 2 input/configuration
problem, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .render import FIGURES, InputError, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jiqlab-report", description=__doc__)
    p.add_argument("--in", dest="in_dir", required=True, help="directory with sweep CSVs")
    p.add_argument("--out", dest="out_dir", required=True, help="figure output directory")
    p.add_argument(
        "--figs",
        default="convergence,tails",
        help=f"comma-separated subset of {','.join(FIGURES)}",
    )
    p.add_argument("--format", default="png", choices=("png", "svg"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    figures = [f for f in args.figs.split(",") if f]
    try:
        meta = render(args.in_dir, args.out_dir, figures=figures, fmt=args.format)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # plotting/back-end failures
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for name in figures:
        info = meta[name]
        print(f"{name}: {info['points']} points, {info['series']} series -> {info['path']}")
    print(f"index -> {meta['index']['path']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
