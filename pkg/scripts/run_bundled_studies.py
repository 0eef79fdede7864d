"""Run every bundled ratio-study config and print one summary line per study.

    python3 scripts/run_bundled_studies.py --out results/studies
"""
import argparse
import sys
import time
from pathlib import Path

from semirv import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/studies"))
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--parallel", action="store_true")
    args = ap.parse_args()
    worst = 0
    for path in harness.bundled_configs():
        t0 = time.perf_counter()
        run = harness.run_config_file(path, args.out / path.stem, args.seed, args.parallel)
        dt = time.perf_counter() - t0
        for name, rep in run.reports.items():
            used = rep.used_rows
            final = abs(used[-1].ratio - 1) if used else float("nan")
            status = "FAIL" if name in run.failures else "ok"
            print(f"{status:4s} {path.stem:22s} {name:24s} {rep.case_tag:18s} "
                  f"{rep.trend:14s} final |r-1|={final:.3e}")
        for m in run.messages:
            print(f"     {m}", file=sys.stderr)
        print(f"     {path.stem}: exit {run.exit_code} in {dt:.1f}s")
        worst = max(worst, run.exit_code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
