#!/usr/bin/env python3
"""Generate the built-in synthetic benchmark datasets.

Usage: python scripts/make_datasets.py [--out data] [--seed 0] [names ...]
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from igad.synthdata import BLUEPRINTS, generate_all


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", metavar="name",
                    help=f"datasets to build from {sorted(BLUEPRINTS)} "
                         "(default: all)")
    ap.add_argument("--out", default="data")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    names = tuple(args.names) if args.names else None
    for path in generate_all(args.out, seed=args.seed, names=names):
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
