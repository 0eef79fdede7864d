"""Discrete-time risk model with insurance and financial risks.

``S_k = sum_{i<=k} X_i prod_{j<=i} Y_j`` and ``M_n = max_{0<=k<=n} S_k``.  Each
``ln X_i^+`` and ``ln Y_i`` follows a semi-regular-variation law on the half
line, so ``P(X_i > x) = min(1, x^-alpha f_i(ln x))`` for ``x >= 1``.
"""
from __future__ import annotations

import functools
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from . import rng
from .asym import (_log_beta_chain, _log_f, _log_fI, log_fold_case_i, log_fold_case_ii,
                   log_fold_case_iii)
from .dist import make_distribution
from .errors import (AccuracyError, DomainError, InvalidSpecError, UnsupportedCaseError,
                     WrongCaseError)
from .oracle import MASS_TO_CELL, GridTails, log_function_convolve_n, wilson_interval
from .special import ln_gamma
from .tailfn import TailFunctionSpec

NO_NEGATIVE_PART = None
SHIFTED_EXP = "ShiftedExp"
BLOCK = 1 << 20


class DominanceWarning(UserWarning):
    """The finite-grid dominance diagnostics did not settle for this config."""


@dataclass(frozen=True)
class RiskModelConfig:
    """Horizon ``n`` with per-period insurance tails ``f_i`` and financial tails ``f*_i``.

    ``negative_part`` is ``None`` (``X_i >= 1``) or ``("ShiftedExp", rate)``: the head
    atom of ``X_i`` at ``e^(x0)`` is replaced by ``e^(x0) - E``, ``E ~ Exp(rate)``, which
    leaves ``P(X_i > x)`` unchanged for ``x >= e^(x0)``.
    """
    n: int
    alpha: float
    insurance: tuple
    financial: tuple
    negative_part: tuple | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidSpecError("horizon n must be a positive integer")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidSpecError("alpha must be positive")
        object.__setattr__(self, "insurance", tuple(self.insurance))
        object.__setattr__(self, "financial", tuple(self.financial))
        if len(self.insurance) != self.n or len(self.financial) != self.n:
            raise InvalidSpecError("need exactly n insurance and n financial tail functions")
        for f in self.insurance + self.financial:
            if not isinstance(f, TailFunctionSpec):
                raise InvalidSpecError("tail functions must be TailFunctionSpec instances")
            if f.lattice:
                raise InvalidSpecError("the risk model uses non-lattice laws only")
            if not f.divergent_integral:
                raise InvalidSpecError(f"{f!r} has a convergent integral; the risk model "
                                       "needs divergent ones")
        neg = self.negative_part
        if neg is not None:
            neg = tuple(neg)
            if len(neg) != 2 or neg[0] != SHIFTED_EXP or not float(neg[1]) > 0:
                raise InvalidSpecError("negative_part must be None or ('ShiftedExp', rate > 0)")
            object.__setattr__(self, "negative_part", (SHIFTED_EXP, float(neg[1])))

    @functools.cached_property
    def insurance_laws(self):
        return tuple(make_distribution(self.alpha, f) for f in self.insurance)

    @functools.cached_property
    def financial_laws(self):
        return tuple(make_distribution(self.alpha, f) for f in self.financial)

    def to_json(self):
        neg = None if self.negative_part is None else {
            "family": SHIFTED_EXP, "rate": self.negative_part[1]}
        return {"n": self.n, "alpha": self.alpha,
                "insurance": [f.to_json() for f in self.insurance],
                "financial": [f.to_json() for f in self.financial],
                "negative_part": neg}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            neg = obj.get("negative_part")
            if isinstance(neg, dict):
                neg = (neg.get("family"), neg.get("rate"))
            return cls(int(obj["n"]), float(obj["alpha"]),
                       tuple(TailFunctionSpec.from_json(f) for f in obj["insurance"]),
                       tuple(TailFunctionSpec.from_json(f) for f in obj["financial"]), neg)
        except KeyError as exc:
            raise InvalidSpecError(f"risk config is missing field {exc.args[0]!r}") from None

    @classmethod
    def constant(cls, n, alpha=1.0):
        """All tail functions identically 1: Pareto(alpha) insurance and financial risks."""
        one = TailFunctionSpec.constant(1.0)
        return cls(n, alpha, (one,) * n, (one,) * n)


@dataclass(frozen=True)
class RuinEstimate:
    point: float
    ci_low: float
    ci_high: float
    samples: int
    seed: int
    hits: int = 0

    def __post_init__(self):
        if not self.ci_low <= self.point <= self.ci_high:
            raise ValueError("estimate outside its interval")

    @property
    def half_width(self):
        return 0.5 * (self.ci_high - self.ci_low)

    def contains(self, value):
        return self.ci_low <= value <= self.ci_high


# -- simulation -------------------------------------------------------------------

def _insurance_stream(i):
    return 3 * i


def _financial_stream(i):
    return 3 * i + 1


def _negative_stream(i):
    return 3 * i + 2


def _draw_x(config, i, seed, block, count):
    d = config.insurance_laws[i]
    logs = d.sample_values(seed, rng.block_stream(_insurance_stream(i), block), count)
    x = np.exp(logs)
    if config.negative_part is not None and d.head_atom > 0:
        rate = config.negative_part[1]
        at_head = logs <= d.x0
        e = -np.log(rng.uniforms(seed, rng.block_stream(_negative_stream(i), block), count))
        x = np.where(at_head, math.exp(d.x0) - e / rate, x)
    return x


def _draw_y(config, i, seed, block, count):
    d = config.financial_laws[i]
    return np.exp(d.sample_values(seed, rng.block_stream(_financial_stream(i), block), count))


def _simulate_block(config, seed, block, count, horizon):
    s = np.zeros(count)
    m = np.zeros(count)
    disc = np.ones(count)
    sk = []
    for i in range(horizon):
        disc *= _draw_y(config, i, seed, block, count)
        s += _draw_x(config, i, seed, block, count) * disc
        np.maximum(m, s, out=m)
        sk.append(s.copy())
    return s, m, sk


def simulate_paths(config, sample_count, seed, horizon=None):
    """Per-sample ``(S_h, M_h)`` for ``h = horizon`` (default ``n``); block-deterministic."""
    horizon = config.n if horizon is None else int(horizon)
    if sample_count < 1:
        raise DomainError("sample_count must be >= 1")
    if not 1 <= horizon <= config.n:
        raise DomainError("horizon must lie in 1..n")
    ss, ms = [], []
    done = block = 0
    while done < sample_count:
        c = min(BLOCK, sample_count - done)
        s, m, _ = _simulate_block(config, seed, block, c, horizon)
        ss.append(s)
        ms.append(m)
        done += c
        block += 1
    return np.concatenate(ss), np.concatenate(ms)


def _estimate(hits, count, seed):
    lo, hi = wilson_interval(hits, count)
    p = hits / count
    return RuinEstimate(p, min(lo, p), max(hi, p), count, int(seed), int(hits))


def _block_counts(config, xs, horizon, seed, block, count):
    s, m, _ = _simulate_block(config, seed, block, count, horizon)
    psi = np.array([np.count_nonzero(m > x) for x in xs], dtype=np.int64)
    sn = np.array([np.count_nonzero(s > x) for x in xs], dtype=np.int64)
    return psi, sn


def ruin_mc_grid(config, xs, horizon, sample_count, seed, workers=1):
    """``[(psi(x, horizon), P(S_horizon > x))]`` estimates for each ``x`` on common paths.

    Blocks of ``2^20`` paths use their own stream ids, so the counts do not depend on
    ``workers``; block counts are reduced in block order.
    """
    xs = [float(x) for x in np.atleast_1d(xs)]
    if any(not x > 0 for x in xs):
        raise DomainError("ruin thresholds must be positive")
    if not 1 <= horizon <= config.n:
        raise DomainError("horizon must lie in 1..n")
    if sample_count < 1:
        raise DomainError("sample_count must be >= 1")
    sizes = [min(BLOCK, sample_count - b * BLOCK) for b in range(-(-sample_count // BLOCK))]
    jobs = [(config, xs, horizon, seed, b, c) for b, c in enumerate(sizes)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_block_counts, *zip(*jobs)))
    else:
        results = [_block_counts(*job) for job in jobs]
    psi = sum(r[0] for r in results)
    sn = sum(r[1] for r in results)
    return [(_estimate(int(p), sample_count, seed), _estimate(int(q), sample_count, seed))
            for p, q in zip(psi, sn)]


def ruin_mc(config, x, horizon, sample_count, seed):
    """Wilson-interval estimate of ``psi(x, horizon)`` and the companion ``P(S_horizon > x)``."""
    return ruin_mc_grid(config, [x], horizon, sample_count, seed)[0]


# -- grid recursion oracle --------------------------------------------------------
#
# S_n has the law of Y_1 (X_1 + Y_2 (X_2 + ... + Y_n X_n)).  Walking backwards, each
# stage adds an exact X_i to a discretized T and multiplies by an exact Y_i.  Every
# intermediate law lives on a uniform grid of log values.  Placing each cell's mass at
# its left edge gives a variable that is stochastically smaller, at its right edge a
# larger one; sums and products of positive variables preserve that order, so the
# two chains bracket the true tail.

def _discretize(tails, lower):
    """Masses on grid points (plus mass at +inf) from tails at the grid points."""
    tails = np.minimum(1.0, np.maximum.accumulate(tails[::-1])[::-1])
    cell = np.maximum(tails[:-1] - tails[1:], 0.0)
    masses = np.zeros(tails.size)
    head = 1.0 - tails[0]
    if lower:
        masses[0] = head
        masses[:-1] += cell
        masses[-1] += tails[-1]
        return masses, 0.0
    masses[0] = head
    masses[1:] += cell
    return masses, float(tails[-1])


def _tail_of_product(masses, inf_mass, y_law, grid, h):
    """P(Y W > e^{u_l}) on the grid for discrete log W and exact Y."""
    ty = y_law.tail(h * np.arange(grid.size))
    conv = fftconvolve(masses, ty)[:grid.size] if grid.size >= 4096 else \
        np.convolve(masses, ty)[:grid.size]
    above = np.concatenate([np.cumsum(masses[::-1])[::-1][1:], [0.0]])
    return np.clip(conv, 0.0, None) + above + inf_mass


def _tail_of_sum(masses, inf_mass, x_law, grid, chunk=256):
    """P(X + T > e^{w}) on the grid for discrete log T and exact X >= e^(x0)."""
    vals = np.exp(grid)
    out = np.empty(grid.size)
    for start in range(0, grid.size, chunk):
        w = vals[start:start + chunk, None]
        diff = w - vals[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(diff > 0, x_law.tail(np.log(np.where(diff > 0, diff, 1.0))), 1.0)
        out[start:start + chunk] = t @ masses
    return np.minimum(1.0, out + inf_mass)


def _final_tails(masses, inf_mass, y_law, grid, log_x):
    out = np.empty(log_x.size)
    for k, lx in enumerate(log_x):
        out[k] = float(masses @ y_law.tail(lx - grid)) + inf_mass
    return out


def sn_tail_oracle_grid(config, x_grid, step=2.0 ** -10, rel_tol=None, horizon=None):
    """Bracketed ``P(S_h > x)`` by backward recursion on a log-value grid.

    Requires ``negative_part=None`` (all risks >= 1).  The bracket width is roughly
    ``(2h - 1) * alpha * step`` in relative terms.
    """
    horizon = config.n if horizon is None else int(horizon)
    if config.negative_part is not None:
        raise UnsupportedCaseError("the grid recursion needs nonnegative insurance risks")
    if horizon > 6:
        raise DomainError("the grid recursion is sized for horizons up to 6")
    x = np.asarray(x_grid, dtype=float)
    if np.any(x <= 0):
        raise DomainError("x must be positive")
    log_x = np.log(x)
    top = max(1.0, float(log_x.max())) + step
    grid = step * np.arange(int(math.ceil(top / step)) + 1)
    xs_laws = config.insurance_laws[:horizon]
    ys_laws = config.financial_laws[:horizon]
    out = []
    for lower in (True, False):
        masses, inf_mass = None, 0.0
        for i in range(horizon - 1, -1, -1):
            if masses is None:
                w_tails = xs_laws[i].tail(grid)
            else:
                w_tails = _tail_of_sum(masses, inf_mass, xs_laws[i], grid)
            w_masses, w_inf = _discretize(w_tails, lower)
            if i == 0:
                out.append(_final_tails(w_masses, w_inf, ys_laws[0], grid, log_x))
                break
            t_tails = _tail_of_product(w_masses, w_inf, ys_laws[i], grid, step)
            masses, inf_mass = _discretize(t_tails, lower)
    with np.errstate(divide="ignore"):
        res = GridTails(x, np.log(out[0]), np.log(out[1]), MASS_TO_CELL)
    if rel_tol is not None and np.any(res.rel_width > rel_tol):
        raise AccuracyError(f"grid bracket {res.rel_width.max():.3g} exceeds {rel_tol:g}; "
                            "use a smaller step", float(np.exp(res.log_mid).max()))
    return res


# -- asymptotic predictors --------------------------------------------------------

def _check_range(x, log_x=None):
    """``ln x`` from either ``x`` or ``log_x``; the latter reaches beyond double range."""
    t = math.log(float(x)) if log_x is None else float(log_x)
    if not t > 0:
        raise DomainError("the product-tail predictors need x > 1")
    return t


def _ratio_decreasing(seq):
    tail = np.asarray(seq[len(seq) // 2:], dtype=float)
    return bool(tail.size >= 2 and np.all(np.diff(tail) < 0))


@dataclass(frozen=True)
class DominanceReport:
    """Ratios ``f_1/(f_k (x) f*_2 (x) ... (x) f*_k)`` and ``f_{k-1}/(f_k (x) f*_k)`` per k."""
    t_grid: tuple
    first_over_chain: dict
    previous_over_pair: dict

    @property
    def chain_passes(self):
        return all(_ratio_decreasing(v) for v in self.first_over_chain.values())

    @property
    def pair_passes(self):
        return all(_ratio_decreasing(v) for v in self.previous_over_pair.values())


def check_dominance_conditions(config, t_grid):
    """Finite-grid diagnostics for the two dominance conditions (never raises on failure)."""
    t = [float(v) for v in t_grid]
    if len(t) < 2 or any(b <= a for a, b in zip(t, t[1:])) or t[0] <= 0:
        raise DomainError("t_grid must be positive and strictly ascending")
    f, fs = config.insurance, config.financial
    chain, pair = {}, {}
    for k in range(2, config.n + 1):
        chain[k] = tuple(math.exp(_log_f(f[0], s) - log_function_convolve_n(
            [f[k - 1], *fs[1:k]], s)) if k > 2 else
            math.exp(_log_f(f[0], s) - log_function_convolve_n([f[k - 1], fs[1]], s))
            for s in t)
        pair[k] = tuple(math.exp(_log_f(f[k - 2], s)
                                 - log_function_convolve_n([f[k - 1], fs[k - 1]], s))
                        for s in t)
    return DominanceReport(tuple(t), chain, pair)


DEFAULT_T_GRID = tuple(2.0 ** k for k in range(1, 8))


@functools.lru_cache(maxsize=64)
def _dominance_ok(config):
    rep = check_dominance_conditions(config, DEFAULT_T_GRID)
    return rep.chain_passes, rep.pair_passes


def log_predict_thm31(config, x=None, check=True, *, log_x=None):
    t = _check_range(x, log_x)
    if check and config.n > 1 and not _dominance_ok(config)[0]:
        warnings.warn("dominance diagnostics fail on the default grid; the prediction "
                      "may not describe P(S_n > x)", DominanceWarning, stacklevel=2)
    fs = [config.insurance[-1], *config.financial]
    return config.n * math.log(config.alpha) - config.alpha * t + log_function_convolve_n(fs, t)


def predict_thm31(config, x, check=True):
    """``alpha^n x^-alpha (f_n (x) f*_1 (x) ... (x) f*_n)(ln x)`` by quadrature."""
    return math.exp(log_predict_thm31(config, x, check))


RISK_CASES = ("i", "ii", "iii", "iv")


def risk_case_for(config):
    """The closed-form case matching the declared indices, or None."""
    gi = [f.gamma_index for f in config.insurance]
    gs = [f.gamma_index for f in config.financial]
    if any(g is None for g in gi + gs):
        return None
    ins_above = all(g > -1 for g in gi)
    ins_minus = all(g == -1 for g in gi)
    fin_above = all(g > -1 for g in gs)
    fin_minus = all(g == -1 for g in gs)
    if ins_above and fin_above:
        return "i"
    if ins_minus and fin_minus:
        return "ii"
    if ins_minus and fin_above:
        return "iii"
    if ins_above and fin_minus:
        return "iv"
    return None


def log_predict_thm32(config, x=None, case=None, *, log_x=None):
    if case not in RISK_CASES:
        raise DomainError(f"case must be one of {RISK_CASES}")
    actual = risk_case_for(config)
    if actual is None:
        raise UnsupportedCaseError("the declared indices mix -1 and > -1 within the "
                                   "insurance or financial risks; no closed form is given")
    if actual != case:
        raise WrongCaseError(f"declared indices match case {actual}, not case {case}")
    t = _check_range(x, log_x)
    fs = [config.insurance[-1], *config.financial]
    fold = {"i": log_fold_case_i, "ii": log_fold_case_ii}.get(case, log_fold_case_iii)
    return config.n * math.log(config.alpha) - config.alpha * t + fold(fs, t)


def predict_thm32(config, x, case):
    """Closed-form ``P(S_n > x)`` asymptotics, case picked by the caller and checked."""
    return math.exp(log_predict_thm32(config, x, case))


def theorem_a_parameters(config):
    """(gamma_star, [gamma_i]) with insurance index gamma_star - 1 and financial gamma_i - 1."""
    gi = {f.gamma_index for f in config.insurance}
    if len(gi) != 1 or None in gi:
        raise WrongCaseError("Gamma-quotient form needs one common insurance index")
    g_star = gi.pop() + 1.0
    gs = [f.gamma_index for f in config.financial]
    if any(g is None for g in gs):
        raise WrongCaseError("financial tail functions must be regularly varying")
    gs = [g + 1.0 for g in gs]
    if g_star <= 0 or any(g <= 0 for g in gs):
        raise WrongCaseError("Gamma-quotient form needs gamma_star > 0 and gamma_i > 0")
    return g_star, gs


def _log_slowly_varying(f, t, index):
    return _log_f(f, t) - index * math.log(t)


def log_predict_theoremA(config, x=None, *, log_x=None):
    g_star, gs = theorem_a_parameters(config)
    t = _check_range(x, log_x)
    g_bar = g_star + sum(gs)
    const = (config.n * math.log(config.alpha) + ln_gamma(g_star) + sum(ln_gamma(g) for g in gs)
             - ln_gamma(g_bar))
    slow = _log_slowly_varying(config.insurance[-1], t, g_star - 1.0) + sum(
        _log_slowly_varying(f, t, g - 1.0) for f, g in zip(config.financial, gs))
    return const + slow + (g_bar - 1.0) * math.log(t) - config.alpha * t


def predict_theoremA(config, x):
    """Gamma-quotient form of the ruin asymptotics for power-times-slowly-varying tails."""
    return math.exp(log_predict_theoremA(config, x))
