"""Command line entry point: render everything from a results directory."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FigureSpec, plot_locerr, plot_rocs, render_pd_table
from .readers import SchemaError


def parse_bands(text: str):
    if text == "all":
        return None
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ValueError(f"--bands wants 'all' or a comma list of indices, got {text!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="Render ROC panels, the localization box plot, and the "
        "detection table from a results directory",
    )
    parser.add_argument("--in", dest="in_dir", required=True, help="results directory")
    parser.add_argument("--out", required=True, help="directory for rendered files")
    parser.add_argument(
        "--bands", default="all", help="'all' or comma list of band indices (0-based)"
    )
    parser.add_argument("--format", dest="fmt", choices=("svg", "png"), default="svg")
    parser.add_argument(
        "--log-fpr", action="store_true", help="logarithmic false positive rate axis"
    )
    args = parser.parse_args(argv)

    try:
        spec = FigureSpec(
            in_dir=Path(args.in_dir),
            out_dir=Path(args.out),
            bands=parse_bands(args.bands),
            fmt=args.fmt,
            log_fpr=args.log_fpr,
        )
        rocs = plot_rocs(spec)
        locerr = plot_locerr(spec)
        table = render_pd_table(spec)
    except ValueError as exc:
        print(f"plotkit: error: {exc}", file=sys.stderr)
        return 2
    except SchemaError as exc:
        print(f"plotkit: error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {len(rocs)} ROC panels, {locerr.name}, {table.name} to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
