"""``semirv`` command line: study, predict, ruin, selfcheck."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import random
import sys
from pathlib import Path

import numpy as np

from . import asym, harness, oracle, risk
from .dist import SemiRVDistribution, exponential, geometric, make_distribution
from .errors import SemiRVError
from .harness import fmt
from .tailfn import TailFunctionSpec


def parse_x_grid(text):
    """``a:b:n`` -> n geometrically spaced points from a to b."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}") from None
    if not (0 < a <= b) or n < 1:
        raise argparse.ArgumentTypeError("need 0 < a <= b and n >= 1")
    return [float(v) for v in np.geomspace(a, b, n)] if n > 1 else [a]


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, newline="")


def _seed(arg, default=0):
    if arg is not None:
        return arg
    env = os.environ.get("SEMIRV_SEED")
    return int(env) if env and env.strip() else default


# -- selfcheck ---------------------------------------------------------------------

def _check_telescoping():
    gen = random.Random(20240601)
    worst = 0.0
    for _ in range(20):
        n = gen.randint(1, 4)
        g_star = gen.uniform(0.05, 3.0)
        gs = [gen.uniform(0.05, 3.0) for _ in range(n)]
        cfg = risk.RiskModelConfig(n, 1.0, (TailFunctionSpec.log_power(g_star - 1),) * n,
                                   tuple(TailFunctionSpec.log_power(g - 1) for g in gs))
        x = math.exp(50.0)
        d = risk.log_predict_theoremA(cfg, x) - risk.log_predict_thm32(cfg, x, "i")
        worst = max(worst, abs(math.expm1(d)))
    return worst <= 1e-10, f"max |A/B - 1| = {worst:.2e}"


def _check_collapse():
    ds = [make_distribution(1.0, TailFunctionSpec.log_power(g)) for g in (0.5, 0.0, 2.0)]
    worst = 0.0
    for x in np.geomspace(5, 5000, 20):
        a = asym.log_predict_thm12_case_iii(ds, x)
        b = asym.log_predict_thm12_case_i(ds, x)
        worst = max(worst, abs(math.expm1(a - b)))
    dm = make_distribution(1.0, TailFunctionSpec.log_power(-1))
    d2 = make_distribution(1.0, TailFunctionSpec.log_power(2))
    x = 300.0
    c = asym.log_predict_thm12_case_iii([dm, d2], x)
    pair = asym.log_predict_lemma22(dm.f, d2.f, x) - x + math.log(1.0)
    worst = max(worst, abs(math.expm1(c - pair)))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def _check_erlang():
    e = exponential()
    worst = 0.0
    for x in (5.0, 10.0, 20.0, 40.0):
        exact = math.log1p(x) - x
        worst = max(worst, abs(math.expm1(oracle.log_conv_tail_2(e, e, x) - exact)))
    return worst <= 1e-9, f"max relative error {worst:.2e}"


def _check_geometric():
    g = geometric()
    ok = oracle.lattice_conv_tail([g, g], 10) == 11 / 1024 and \
        oracle.lattice_conv_tail([g, g], 0) == 1.0
    k = 128
    r = oracle.lattice_conv_tail([g, g], k) / asym.predict_thm11([g, g], k)
    ok = ok and abs(r - (k + 1) / k) < 1e-9
    return ok, f"ratio at k=128: {r:.12f}"


def _check_constants():
    ok = asym.lattice_mix_constant(1, 0, 3) == 1.0 and \
        math.isclose(asym.lattice_mix_constant(math.log(2), 2, 2), 1.0, rel_tol=1e-15) and \
        math.isclose(asym.lattice_mix_constant(1, 1, 3), math.sqrt(math.e - 1), rel_tol=1e-15)
    return ok, "a in {1, 1, sqrt(e-1)}"


SELF_CHECKS = (
    ("beta_gamma_telescoping", _check_telescoping),
    ("case_collapse", _check_collapse),
    ("erlang_golden", _check_erlang),
    ("geometric_golden", _check_geometric),
    ("lattice_constants", _check_constants),
)


def selfcheck(stream=None):
    stream = sys.stdout if stream is None else stream
    ok_all = True
    for name, fn in SELF_CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report rather than crash the whole suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=stream)
    return 0 if ok_all else 1


# -- commands ----------------------------------------------------------------------

def cmd_study(args):
    run = harness.run_config_file(args.config, args.out, args.seed, args.parallel)
    for m in run.messages:
        print(m, file=sys.stderr)
    for name, rep in run.reports.items():
        status = "FAIL" if name in run.failures else "ok"
        print(f"{status} {name}: {rep.case_tag} trend={rep.trend}")
    return run.exit_code


def _load_dists(path):
    obj = json.loads(Path(path).read_text())
    if isinstance(obj, dict):
        obj = obj.get("dists", [])
    return [SemiRVDistribution.from_json(d) for d in obj]


def cmd_predict(args):
    pred = asym.classify_and_predict(_load_dists(args.dists))
    _emit(harness.prediction_rows(pred, args.x_grid), args.out)
    return 0


def cmd_ruin(args):
    cfg = risk.RiskModelConfig.from_json(json.loads(Path(args.config).read_text()))
    horizon = args.horizon or cfg.n
    seed = _seed(args.seed)
    est = risk.ruin_mc_grid(cfg, args.x_grid, horizon, args.samples, seed, args.workers)
    case = risk.risk_case_for(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["x", "horizon", "psi_mc", "ci_low", "ci_high", "sn_mc", "predict_thm31",
                "predict_thm32", "predict_theoremA", "ratio_psi_thm31", "ratio_sn_thm31"])
    for x, (psi, sn) in zip(args.x_grid, est):
        sub = cfg if horizon == cfg.n else risk.RiskModelConfig(
            horizon, cfg.alpha, cfg.insurance[:horizon], cfg.financial[:horizon],
            cfg.negative_part)
        p31 = risk.predict_thm31(sub, x, check=False)
        p32 = risk.predict_thm32(sub, x, case) if case else None
        try:
            pa = risk.predict_theoremA(sub, x)
        except SemiRVError:
            pa = None
        w.writerow([fmt(x), horizon, fmt(psi.point), fmt(psi.ci_low), fmt(psi.ci_high),
                    fmt(sn.point), fmt(p31), fmt(p32), fmt(pa), fmt(psi.point / p31),
                    fmt(sn.point / p31)])
    _emit(buf.getvalue(), args.out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="semirv", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("study", help="run the ratio studies in a config file")
    s.add_argument("config")
    s.add_argument("--out", default=None, help="output directory")
    s.add_argument("--parallel", action="store_true")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_study)
    s = sub.add_parser("predict", help="asymptotic tail of a convolution")
    s.add_argument("--dists", required=True)
    s.add_argument("--x-grid", type=parse_x_grid, required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_predict)
    s = sub.add_parser("ruin", help="Monte Carlo ruin probabilities with predictions")
    s.add_argument("--config", required=True)
    s.add_argument("--x-grid", type=parse_x_grid, required=True)
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--horizon", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_ruin)
    s = sub.add_parser("selfcheck", help="run the identity suite")
    s.set_defaults(func=lambda a: selfcheck())
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SemiRVError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
