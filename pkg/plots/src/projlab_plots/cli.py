"""plot: render a figure from a projlab CSV.

    plot --kind exceedance --in verdict.csv --out exceedance.png
    plot --kind sweep-lines --in proof_sweep.csv --out e1.png \
         --filter functional=marginal-mse-iid --logy
"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plot", description=__doc__)
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--in", dest="input_csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--filter",
        action="append",
        default=[],
        metavar="COL=VALUE",
        help="keep only rows with COL equal to VALUE (repeatable)",
    )
    p.add_argument("--logy", action="store_true")
    p.add_argument("--title", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    filters = {}
    for item in args.filter:
        if "=" not in item:
            print(f"error: bad --filter {item!r}, expected COL=VALUE", file=sys.stderr)
            return 2
        col, value = item.split("=", 1)
        filters[col] = value
    try:
        spec = FigureSpec(
            input_csv=args.input_csv,
            kind=args.kind,
            output=args.out,
            filters=filters,
            logy=args.logy,
            title=args.title,
        )
        render(spec)
    except (SchemaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
