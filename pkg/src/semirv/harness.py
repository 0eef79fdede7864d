"""Ratio studies: oracle value over predicted value on an x grid, with trend analysis.

A study config is JSON::

    {"seed": 7,
     "studies": [{"name": "erlang",
                  "inputs": {"dists": [{"alpha": 1, "f": {"family": "constant", ...}}, ...]},
                  "oracle": "conv_tail_2", "predictor": "thm12_i",
                  "x_grid": {"start": 10, "stop": 60, "num": 6, "spacing": "linear"},
                  "assert": {"trend": ["ConvergingTo1"]}}]}

Rows hold log values as well, since deep tails underflow doubles.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import asym, oracle, risk
from .dist import SemiRVDistribution, make_distribution
from .errors import InvalidSpecError, SemiRVError
from .tailfn import TailFunctionSpec

CONVERGING = "ConvergingTo1"
INCONCLUSIVE = "Inconclusive"
DIVERGING = "Diverging"
TRENDS = (CONVERGING, INCONCLUSIVE, DIVERGING)
FLAG_FRACTION = 0.25
CONFIG_DIR = Path(__file__).with_name("configs")


def tool_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def fmt(v):
    """17 significant digits, the CSV float format."""
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


# -- report -----------------------------------------------------------------------

@dataclass(frozen=True)
class StudyRow:
    x: float
    log_oracle: float
    oracle_error_bound: float
    log_predicted: float
    flagged: bool = False
    lower: float | None = None
    upper: float | None = None

    @property
    def oracle_value(self):
        return math.exp(self.log_oracle)

    @property
    def predicted_value(self):
        return math.exp(self.log_predicted)

    @property
    def ratio(self):
        return math.exp(self.log_oracle - self.log_predicted)


def classify_trend(ratios):
    """ConvergingTo1 iff |r-1| is nonincreasing over the last max(3, half) points and ends
    below half its first value; Diverging iff it is nondecreasing there and ends above it."""
    dev = [abs(r - 1.0) for r in ratios]
    if len(dev) < 3:
        return INCONCLUSIVE
    k = max(3, -(-len(dev) // 2))
    window = dev[-k:]
    steps = np.diff(window)
    if np.all(steps <= 0) and dev[-1] < dev[0] / 2:
        return CONVERGING
    if np.all(steps >= 0) and dev[-1] > dev[0]:
        return DIVERGING
    return INCONCLUSIVE


@dataclass
class RatioStudyReport:
    rows: list
    trend: str
    metadata: dict = field(default_factory=dict)
    case_tag: str = ""

    @property
    def ratios(self):
        return [r.ratio for r in self.rows]

    @property
    def used_rows(self):
        return [r for r in self.rows if not r.flagged]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        envelope = any(r.lower is not None for r in self.rows)
        head = ["x", "oracle_value", "oracle_error_bound", "predicted_value", "ratio",
                "log_oracle", "log_predicted", "flagged"]
        if envelope:
            head += ["envelope_lower", "envelope_upper"]
        w.writerow(head)
        for r in self.rows:
            line = [fmt(r.x), fmt(r.oracle_value), fmt(r.oracle_error_bound),
                    fmt(r.predicted_value), fmt(r.ratio), fmt(r.log_oracle),
                    fmt(r.log_predicted), int(r.flagged)]
            if envelope:
                line += [fmt(r.lower), fmt(r.upper)]
            w.writerow(line)
        return buf.getvalue()


# -- inputs ------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyInputs:
    dists: tuple = ()
    functions: tuple = ()
    risk: risk.RiskModelConfig | None = None
    prop41: dict | None = None
    envelope: tuple = ()
    horizon: int | None = None


def _dist_from(obj, where):
    if isinstance(obj, SemiRVDistribution):
        return obj
    if not isinstance(obj, dict) or "alpha" not in obj or "f" not in obj:
        raise InvalidSpecError(f"{where}: a distribution needs 'alpha' and 'f'")
    return SemiRVDistribution.from_json(obj)


def parse_inputs(obj, where="inputs"):
    if not isinstance(obj, dict):
        raise InvalidSpecError(f"{where}: expected an object")
    dists = tuple(_dist_from(d, f"{where}.dists[{i}]") for i, d in enumerate(obj.get("dists", ())))
    functions = tuple(TailFunctionSpec.from_json(f) for f in obj.get("functions", ()))
    cfg = risk.RiskModelConfig.from_json(obj["risk"]) if "risk" in obj else None
    p41 = obj.get("prop41")
    if p41 is not None:
        try:
            p41 = {k: float(p41[k]) for k in ("alpha", "C", "D", "beta")} | {
                "n_fold": int(p41.get("n_fold", 2))}
        except KeyError as exc:
            raise InvalidSpecError(f"{where}.prop41: missing field {exc.args[0]!r}") from None
        f = TailFunctionSpec.exp_power(p41["C"], p41["beta"], p41["D"])
        dists = dists or tuple([make_distribution(p41["alpha"], f)] * p41["n_fold"])
    env = []
    for i, e in enumerate(obj.get("envelope", ())):
        try:
            env.append((_dist_from(e["dist"], f"{where}.envelope[{i}].dist"),
                        TailFunctionSpec.from_json(e["f0"]), float(e["c"]), float(e["d"])))
        except KeyError as exc:
            raise InvalidSpecError(f"{where}.envelope[{i}]: missing field {exc.args[0]!r}") \
                from None
    if env and not dists:
        dists = tuple(e[0] for e in env)
    return StudyInputs(dists, functions, cfg, p41, tuple(env), obj.get("horizon"))


def x_grid_from(spec, where="x_grid"):
    if isinstance(spec, list):
        xs = [float(v) for v in spec]
    elif isinstance(spec, dict):
        try:
            start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except KeyError as exc:
            raise InvalidSpecError(f"{where}: missing field {exc.args[0]!r}") from None
        spacing = spec.get("spacing", "geometric")
        if spacing == "geometric":
            xs = list(np.geomspace(start, stop, num))
        elif spacing == "linear":
            xs = list(np.linspace(start, stop, num))
        elif spacing == "exp_linear":  # x = e^t with t evenly spaced
            xs = list(np.exp(np.linspace(start, stop, num)))
        else:
            raise InvalidSpecError(f"{where}.spacing: unknown spacing {spacing!r}")
    else:
        raise InvalidSpecError(f"{where}: expected a list or a start/stop/num object")
    return [float(v) for v in xs]


# -- named oracles: (inputs, xs, seed, options) -> [(log value, abs error bound)] ----

def _need(inputs, attr, name):
    val = getattr(inputs, attr)
    if not val:
        raise InvalidSpecError(f"oracle/predictor {name!r} needs inputs.{attr}")
    return val


def _log(v):
    return math.log(v) if v > 0 else -math.inf


def _oracle_conv_tail_2(inputs, xs, seed, opts):
    ds = _need(inputs, "dists", "conv_tail_2")
    if len(ds) != 2:
        raise InvalidSpecError("conv_tail_2 needs exactly two distributions")
    out = []
    for x in xs:
        lv = oracle.log_conv_tail_2(ds[0], ds[1], x)
        out.append((lv, 1e-9 * math.exp(lv)))
    return out


def _oracle_lattice(inputs, xs, seed, opts):
    ds = _need(inputs, "dists", "lattice_sum")
    out = []
    for x in xs:
        v = oracle.lattice_conv_tail(ds, int(math.floor(x)))
        out.append((_log(v), 1e-13 * v))
    return out


def _oracle_grid(inputs, xs, seed, opts):
    ds = _need(inputs, "dists", "grid")
    step = float(opts.get("step", 2.0 ** -10))
    plan = oracle.GridConvolutionPlan(step, max(xs) + sum(d.x0 for d in ds) + 1.0)
    g = oracle.conv_tail_n_grid(ds, plan, xs)
    return [(float(m), float(np.exp(m)) * float(w) / 2)
            for m, w in zip(g.log_mid, g.rel_width)]


def _oracle_mc(inputs, xs, seed, opts):
    ds = _need(inputs, "dists", "mc")
    n = int(opts.get("samples", 100_000))
    out = []
    for x in xs:
        e = oracle.mc_conv_tail(ds, x, n, seed)
        out.append((_log(e.estimate), e.half_width))
    return out


def _oracle_function_convolve(inputs, xs, seed, opts):
    fs = _need(inputs, "functions", "function_convolve")
    return [(oracle.log_function_convolve_n(fs, x) if len(fs) > 2
             else oracle.log_function_convolve(fs[0], fs[1], x), 0.0) for x in xs]


def _oracle_fold_integral(inputs, xs, seed, opts):
    fs = _need(inputs, "functions", "fold_integral")
    return [(asym.log_fold_integral(fs, x), 0.0) for x in xs]


def _oracle_sn_grid(inputs, xs, seed, opts):
    cfg = _need(inputs, "risk", "sn_grid")
    g = risk.sn_tail_oracle_grid(cfg, xs, step=float(opts.get("step", 2.0 ** -10)),
                                 horizon=inputs.horizon)
    return [(float(m), float(np.exp(m)) * float(w) / 2)
            for m, w in zip(g.log_mid, g.rel_width)]


def _ruin(inputs, xs, seed, opts, which):
    cfg = _need(inputs, "risk", which)
    n = int(opts.get("samples", 100_000))
    horizon = inputs.horizon or cfg.n
    res = risk.ruin_mc_grid(cfg, xs, horizon, n, seed, workers=int(opts.get("workers", 1)))
    pick = 0 if which == "psi_mc" else 1
    return [(_log(r[pick].point), r[pick].half_width) for r in res]


ORACLES = {
    "conv_tail_2": _oracle_conv_tail_2,
    "lattice_sum": _oracle_lattice,
    "grid": _oracle_grid,
    "mc": _oracle_mc,
    "function_convolve": _oracle_function_convolve,
    "fold_integral": _oracle_fold_integral,
    "sn_grid": _oracle_sn_grid,
    "psi_mc": lambda *a: _ruin(*a, which="psi_mc"),
    "sn_mc": lambda *a: _ruin(*a, which="sn_mc"),
}


# -- named predictors: inputs -> (case tag, x -> log value or (log lo, log hi)) ---------

def _dist_predictor(fn, tag):
    def build(inputs):
        ds = _need(inputs, "dists", tag)
        if tag == "auto":
            p = asym.classify_and_predict(ds)
            return p.case_tag, p.log_evaluator
        return tag, lambda x: fn(ds, x)
    return build


def _lemma22(inputs):
    fs = _need(inputs, "functions", "lemma22")
    if len(fs) != 2:
        raise InvalidSpecError("lemma22 needs exactly two functions")
    return asym._lemma22_case(*fs), lambda x: asym.log_predict_lemma22(fs[0], fs[1], x)


def _gni(inputs):
    fs = _need(inputs, "functions", "gnI_product")
    for f in fs:
        if f.gamma_index != -1:
            raise InvalidSpecError("gnI_product needs functions of index -1")
    return asym.THM12_II, lambda x: sum(asym._log_fI(f, x) for f in fs)


def _prop41(inputs):
    p = _need(inputs, "prop41", "prop41")
    return asym.PROP41, lambda x: asym.log_predict_prop41(
        p["alpha"], p["C"], p["D"], p["beta"], p["n_fold"], x)


def _envelope(inputs):
    env = _need(inputs, "envelope", "prop42_envelope")
    return asym.PROP42, lambda x: asym.log_envelope_prop42(env, x)


def _risk_predictor(kind):
    def build(inputs):
        cfg = _need(inputs, "risk", kind)
        if kind == "thm31":
            return "Thm31", lambda x: risk.log_predict_thm31(cfg, x)
        if kind == "thm32":
            case = risk.risk_case_for(cfg)
            if case is None:
                raise InvalidSpecError("risk config matches no closed-form case")
            return f"Thm32_{case}", lambda x: risk.log_predict_thm32(cfg, x, case)
        return "TheoremA", lambda x: risk.log_predict_theoremA(cfg, x)
    return build


PREDICTORS = {
    "auto": _dist_predictor(None, "auto"),
    "thm11": _dist_predictor(asym.log_predict_thm11, asym.THM11),
    "thm12_i": _dist_predictor(asym.log_predict_thm12_case_i, asym.THM12_I),
    "thm12_ii": _dist_predictor(asym.log_predict_thm12_case_ii, asym.THM12_II),
    "thm12_iii": _dist_predictor(asym.log_predict_thm12_case_iii, asym.THM12_III),
    "lemma22": _lemma22,
    "gnI_product": _gni,
    "prop41": _prop41,
    "prop42_envelope": _envelope,
    "thm31": _risk_predictor("thm31"),
    "thm32": _risk_predictor("thm32"),
    "theoremA": _risk_predictor("theoremA"),
}


def _hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def run_ratio_study(oracle_name, predictor_name, inputs, x_grid, seed=0, options=None,
                    config_hash=""):
    """Evaluate oracle and predictor on ``x_grid`` and classify the ratio trend."""
    xs = [float(x) for x in x_grid]
    if len(xs) < 5:
        raise InvalidSpecError("x_grid needs at least 5 points")
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise InvalidSpecError("x_grid must be strictly ascending")
    if oracle_name not in ORACLES:
        raise InvalidSpecError(f"unknown oracle {oracle_name!r}; known: {sorted(ORACLES)}")
    if predictor_name not in PREDICTORS:
        raise InvalidSpecError(f"unknown predictor {predictor_name!r}; "
                               f"known: {sorted(PREDICTORS)}")
    if not isinstance(inputs, StudyInputs):
        inputs = parse_inputs(inputs)
    options = dict(options or {})
    tag, log_pred = PREDICTORS[predictor_name](inputs)
    values = ORACLES[oracle_name](inputs, xs, seed, options)
    rows = []
    for x, (lv, err) in zip(xs, values):
        pv = log_pred(x)
        lower = upper = None
        if isinstance(pv, tuple):
            lower, upper = math.exp(pv[0]), math.exp(pv[1])
            pv = 0.5 * (pv[0] + pv[1])
        value = math.exp(lv) if lv > -math.inf else 0.0
        flagged = not lv > -math.inf or (value > 0 and err > FLAG_FRACTION * value)
        rows.append(StudyRow(x, lv, err, pv, flagged, lower, upper))
    used = [r.ratio for r in rows if not r.flagged]
    meta = {"config_hash": config_hash, "seed": seed, "tool_version": tool_version(),
            "oracle": oracle_name, "predictor": predictor_name}
    return RatioStudyReport(rows, classify_trend(used), meta, tag)


# -- assertions --------------------------------------------------------------------

def check_assertions(report, spec):
    """List of failure messages for the declared assertions."""
    failures = []
    if not spec:
        return failures
    trend = spec.get("trend")
    if trend is not None:
        allowed = [trend] if isinstance(trend, str) else list(trend)
        if report.trend not in allowed:
            failures.append(f"trend {report.trend} not in {allowed}")
    tol = spec.get("ratio_tolerance")
    if tol is not None:
        at = tol.get("x")
        for r in report.rows:
            if at is None or any(math.isclose(r.x, a, rel_tol=1e-12) for a in at):
                if abs(r.ratio - 1.0) > float(tol["tol"]):
                    failures.append(f"|ratio - 1| = {abs(r.ratio - 1):.3g} at x={r.x:g} "
                                    f"exceeds {tol['tol']}")
    final = spec.get("final_ratio_error_below")
    if final is not None:
        used = report.used_rows
        if not used or abs(used[-1].ratio - 1) >= float(final):
            failures.append(f"final |ratio - 1| not below {final}")
    if spec.get("inside_envelope"):
        for r in report.rows:
            lo = r.oracle_value - r.oracle_error_bound
            hi = r.oracle_value + r.oracle_error_bound
            if r.lower is None or lo < r.lower or hi > r.upper:
                failures.append(f"oracle outside envelope at x={r.x:g}")
    return failures


# -- config files ------------------------------------------------------------------

class SchemaError(InvalidSpecError):
    pass


STUDY_KEYS = {"name", "inputs", "oracle", "predictor", "x_grid", "assert", "options", "seed"}


def load_config(path):
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict) or not isinstance(cfg.get("studies"), list):
        raise SchemaError(f"{path}: top level needs a 'studies' list")
    names = set()
    for i, st in enumerate(cfg["studies"]):
        where = f"studies[{i}]"
        if not isinstance(st, dict):
            raise SchemaError(f"{path}: {where}: expected an object")
        for key in ("name", "inputs", "oracle", "predictor", "x_grid"):
            if key not in st:
                raise SchemaError(f"{path}: {where}.{key}: required field missing")
        extra = set(st) - STUDY_KEYS
        if extra:
            raise SchemaError(f"{path}: {where}: unknown fields {sorted(extra)}")
        if st["name"] in names:
            raise SchemaError(f"{path}: {where}.name: duplicate study name {st['name']!r}")
        names.add(st["name"])
        if st["oracle"] not in ORACLES:
            raise SchemaError(f"{path}: {where}.oracle: unknown oracle {st['oracle']!r}")
        if st["predictor"] not in PREDICTORS:
            raise SchemaError(f"{path}: {where}.predictor: unknown predictor "
                              f"{st['predictor']!r}")
        try:
            parse_inputs(st["inputs"], f"{where}.inputs")
            x_grid_from(st["x_grid"], f"{where}.x_grid")
        except (InvalidSpecError, ValueError, TypeError) as exc:
            raise SchemaError(f"{path}: {where}: {exc}") from None
    return cfg


def _effective_seed(cfg, study, override):
    if override is not None:
        return int(override)
    env = os.environ.get("SEMIRV_SEED")
    if env is not None and env.strip():
        return int(env)
    return int(study.get("seed", cfg.get("seed", 0)))


def _run_one(study, seed, config_hash):
    t0 = time.perf_counter()
    rep = run_ratio_study(study["oracle"], study["predictor"], parse_inputs(study["inputs"]),
                          x_grid_from(study["x_grid"]), seed, study.get("options"),
                          config_hash)
    fails = check_assertions(rep, study.get("assert"))
    return rep, fails, time.perf_counter() - t0


@dataclass
class ConfigRun:
    exit_code: int
    reports: dict
    failures: dict
    messages: list
    manifest_path: Path | None = None


def run_config_file(path, out_dir=None, seed=None, parallel=False):
    """Run every study in ``path``; 0 if all assertions hold, 1 if some fail, 2 on schema errors."""
    path = Path(path)
    try:
        cfg = load_config(path)
    except (SchemaError, OSError) as exc:
        return ConfigRun(2, {}, {}, [str(exc)])
    out = Path(out_dir) if out_dir is not None else Path.cwd() / f"{path.stem}_out"
    out.mkdir(parents=True, exist_ok=True)
    studies = cfg["studies"]
    seeds = [_effective_seed(cfg, st, seed) for st in studies]
    hashes = [_hash(st) for st in studies]
    try:
        if parallel and len(studies) > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor() as pool:
                results = list(pool.map(_run_one, studies, seeds, hashes))
        else:
            results = [_run_one(st, s, h) for st, s, h in zip(studies, seeds, hashes)]
    except SemiRVError as exc:
        return ConfigRun(2, {}, {}, [f"{path}: {type(exc).__name__}: {exc}"])
    reports, failures, entries = {}, {}, []
    for st, seed_i, h, (rep, fails, dt) in zip(studies, seeds, hashes, results):
        name = st["name"]
        csv_path = out / f"{name}.csv"
        csv_path.write_text(rep.to_csv(), newline="")
        reports[name] = rep
        if fails:
            failures[name] = fails
        entries.append({"name": name, "csv": csv_path.name, "config_hash": h, "seed": seed_i,
                        "case_tag": rep.case_tag, "trend": rep.trend, "passed": not fails,
                        "duration_s": round(dt, 6)})
    manifest = {"config": str(path), "inputs_sha256": _hash(cfg),
                "tool_version": tool_version(), "studies": entries,
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2) + "\n")
    msgs = [f"{name}: {m}" for name, fs in failures.items() for m in fs]
    return ConfigRun(1 if failures else 0, reports, failures, msgs, mpath)


def bundled_configs():
    return sorted(CONFIG_DIR.glob("*.json"))


def prediction_rows(prediction, xs):
    """CSV text with columns x, predicted, case_tag, a_constant."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["x", "predicted", "case_tag", "a_constant"])
    for x in xs:
        w.writerow([fmt(x), fmt(prediction(x)), prediction.case_tag, fmt(prediction.a_constant)])
    return buf.getvalue()
