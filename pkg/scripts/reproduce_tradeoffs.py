#!/usr/bin/env python3
"""Generate the three preset trade-off sweeps as CSV files.

The CSVs are the interface consumed by the plotting package in frontend/:

    python3 scripts/reproduce_tradeoffs.py --out results/
    python3 frontend/plot.py --csv results/fig3left.csv --kind tradeoff \
        --out results/fig3left.svg --logy
"""
import argparse
import pathlib

from plannersim import cli

PRESETS = ["fig3left", "fig3right", "fig4"]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("results"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for preset in PRESETS:
        path = args.out / f"{preset}.csv"
        code = cli.main(["sweep", "--spec", preset, "--out", str(path)])
        if code != 0:
            return code
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
