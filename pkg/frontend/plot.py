#!/usr/bin/env python3
"""Render a sweep CSV as a figure.

Usage:
    plot.py --csv rows.csv --kind tradeoff|minimal --out figure.svg [--logy]
"""
import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))

from sweepplots import FigureSpec, MissingColumns, render  # noqa: E402


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--csv", required=True, type=pathlib.Path)
    ap.add_argument("--kind", required=True, choices=["tradeoff", "minimal"])
    ap.add_argument("--out", required=True, type=pathlib.Path)
    ap.add_argument("--logy", action="store_true")
    args = ap.parse_args(argv)
    try:
        out = render(
            FigureSpec(csv=args.csv, kind=args.kind, out=args.out,
                       logy=args.logy)
        )
    except (OSError, MissingColumns, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
