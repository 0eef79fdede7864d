"""Where the two-fold sawtooth tail sits inside its envelope, period by period.

The sawtooth tail function oscillates between 1 and 2 times a linear profile on
geometrically growing periods, so the convolution tail has no single asymptotic
constant.  This script tabulates log(oracle / lower envelope), which must stay in
[0, ln 4], over several periods.

    python3 scripts/envelope_study.py --periods 3 7 --per-period 8
"""
import argparse
import math
import sys

import numpy as np

from semirv import asym, oracle
from semirv.dist import make_distribution
from semirv.tailfn import TailFunctionSpec as T


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=0.25)
    ap.add_argument("--periods", type=int, nargs=2, default=(3, 7))
    ap.add_argument("--per-period", type=int, default=8)
    ap.add_argument("--step", type=float, default=1 / 16)
    args = ap.parse_args()
    saw = make_distribution(args.alpha, T.piecewise_oscillating())
    entries = [(saw, T.log_power(1), 1.0, 2.0)] * 2
    lo_k, hi_k = args.periods
    xs = np.geomspace(4.0 ** lo_k, 4.0 ** (hi_k + 1), (hi_k - lo_k + 1) * args.per_period,
                      endpoint=False)
    plan = oracle.GridConvolutionPlan(args.step, float(xs[-1]) + 2 * saw.x0 + 1)
    g = oracle.conv_tail_n_grid([saw, saw], plan, xs)
    width = math.log(4.0)
    print(f"{'x':>12s} {'log(oracle/lower)':>18s} {'position':>9s}")
    ok = True
    for i, x in enumerate(xs):
        lo, hi = asym.log_envelope_prop42(entries, x)
        inside = lo <= g.log_lower[i] and g.log_upper[i] <= hi
        ok &= inside
        pos = (g.log_mid[i] - lo) / width
        bar = "#" * int(round(40 * pos))
        print(f"{x:12.1f} {g.log_mid[i] - lo:18.4f} {pos:9.3f} {bar}{'' if inside else '  OUT'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
