"""Run the bundled experiment configs through the CLI.

    python scripts/run_experiments.py                      # all three
    python scripts/run_experiments.py shepp_logan --seed 3 --out-root runs/seed3

Each experiment writes to ``<out-root>/<name>``; the process exit status is
nonzero if any experiment failed.
"""

import argparse
import sys
from pathlib import Path

from spect_bayes.cli import main as cli

CONFIGS = Path(__file__).resolve().parent / "configs"
NAMES = ("point_source_sweep", "algorithm_comparison", "shepp_logan")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", metavar="name", help=f"any of {', '.join(NAMES)} (default: all)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out-root", default="runs")
    args = ap.parse_args()
    unknown = sorted(set(args.names) - set(NAMES))
    if unknown:
        ap.error(f"unknown experiments: {unknown}")

    failed = []
    for name in args.names or NAMES:
        argv = ["run", "--config", str(CONFIGS / f"{name}.json"), "--out", f"{args.out_root}/{name}"]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        if cli(argv) != 0:
            failed.append(name)
    if failed:
        print("failed:", ", ".join(failed), file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
