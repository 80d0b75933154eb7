"""Command line: `cbsnr-plot <figure-kind> <run-dir>... -o out.png`."""

from __future__ import annotations

import argparse
import sys

from .contracts import ContractError
from .figures import FIGURE_KINDS, FigureSpec, plot


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cbsnr-plot",
        description="Render figures from cbsnr run directories")
    p.add_argument("kind", choices=FIGURE_KINDS)
    p.add_argument("inputs", nargs="+",
                   help="run directories (or the costmodel output dir for "
                        "figure kind 'scalability')")
    p.add_argument("-o", "--output", required=True, help="output image path")
    p.add_argument("--classes", help="comma-separated class filter, e.g. p1,p3")
    p.add_argument("--ues", help="comma-separated UE ids (credit_trace)")
    p.add_argument("--slots", help="slot window A:B (credit_trace)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    slots = None
    if args.slots:
        a, _, b = args.slots.partition(":")
        slots = (int(a), int(b))
    spec = FigureSpec(
        kind=args.kind,
        inputs=args.inputs,
        output=args.output,
        classes=args.classes.split(",") if args.classes else None,
        ues=[int(u) for u in args.ues.split(",")] if args.ues else None,
        slots=slots,
    )
    try:
        path = plot(spec)
    except ContractError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
