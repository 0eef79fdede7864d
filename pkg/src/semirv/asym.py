"""Asymptotic predictors for convolution tails.

Every predictor has a ``log_`` form (used by ratio studies, since the tails
underflow long before the asymptotics settle) and a plain form returning the
value itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, UnsupportedCaseError, WrongCaseError
from .oracle import _tabulate_fold, log_function_convolve_n
from .quad import integrate_log, log_sum_exp
from .special import ln_beta
from .tailfn import TailFunctionSpec

THM11 = "Thm11General"
THM12_I = "Thm12_AllAboveMinus1"
THM12_II = "Thm12_AllMinus1"
THM12_III = "Thm12_Mixed"
LEMMA22_I = "Lemma22_i"
LEMMA22_II = "Lemma22_ii"
LEMMA22_III = "Lemma22_iii"
PROP41 = "Prop41"
PROP42 = "Prop42Envelope"
CASE_TAGS = (THM11, THM12_I, THM12_II, THM12_III, LEMMA22_I, LEMMA22_II, LEMMA22_III,
             PROP41, PROP42)

_L2_MESSAGE = ("distribution of class L2(alpha) (int_0^inf f(y) dy < inf) is outside "
               "the convolution theorems; only divergent-integral members are predicted")


@dataclass(frozen=True)
class AsymptoticPrediction:
    case_tag: str
    a_constant: float
    log_evaluator: Callable[[float], float]
    envelope: bool = False

    def log_value(self, x):
        return self.log_evaluator(float(x))

    def __call__(self, x):
        v = self.log_evaluator(float(x))
        if self.envelope:
            return math.exp(v[0]), math.exp(v[1])
        return math.exp(v)


# -- constants and checks ------------------------------------------------------

def lattice_mix_constant(alpha, m_lattice, n_total):
    """The constant ``a`` of an ``n_total``-fold convolution with ``m_lattice`` lattice laws."""
    alpha = float(alpha)
    m, n = int(m_lattice), int(n_total)
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if not 0 <= m <= n or n < 1:
        raise DomainError("need 0 <= m_lattice <= n_total and n_total >= 1")
    if m == 0:
        return alpha
    if m == n:
        return math.expm1(alpha)
    if n < 2:
        raise DomainError("a mixed lattice/non-lattice constant needs n_total >= 2")
    return math.expm1(alpha) ** (m / (n - 1)) * alpha ** ((n - m - 1) / (n - 1))


def _common_alpha(ds):
    alphas = {float(d.alpha) for d in ds}
    if len(alphas) != 1:
        raise UnsupportedCaseError(
            "distributions with different alpha: the lighter ones only contribute a "
            "finite exponential moment factor, which these predictors do not compute")
    return alphas.pop()


def _check_divergent(ds):
    for d in ds:
        if d.class_tag.name == "L2":
            raise UnsupportedCaseError(_L2_MESSAGE)


def _a_for(ds):
    alpha = _common_alpha(ds)
    m = sum(1 for d in ds if d.lattice)
    return lattice_mix_constant(alpha, m, len(ds)) if len(ds) > 1 else alpha


def _gammas(ds):
    out = []
    for d in ds:
        if d.class_tag.name != "L11":
            raise WrongCaseError(f"{d!r} is not in L11; use the general quadrature predictor")
        out.append(d.f.gamma_index)
    return out


def _log_fI(f, x):
    return math.log(float(f.integral(x)))


def _log_f(f, x):
    return float(f.log_f(x))


# -- general form by quadrature ----------------------------------------------------

def log_predict_thm11(ds, x):
    ds = list(ds)
    _check_divergent(ds)
    a = _a_for(ds)
    alpha = ds[0].alpha
    fs = [d.f for d in ds]
    if len(fs) == 1:
        return -alpha * x + _log_f(fs[0], x)
    return (len(ds) - 1) * math.log(a) - alpha * x + log_function_convolve_n(fs, x)


def predict_thm11(ds, x):
    """``a^(n-1) exp(-alpha x) (f_1 (x) ... (x) f_n)(x)`` by quadrature."""
    return math.exp(log_predict_thm11(ds, x))


# -- closed forms for regularly varying members -----------------------------------

def _log_beta_chain(gammas):
    """sum_j log B(sum_{k<=j} gamma_k + j, gamma_{j+1} + 1) over j = 1..len-1."""
    total = 0.0
    acc = 0.0
    for j in range(1, len(gammas)):
        acc += gammas[j - 1]
        total += ln_beta(acc + j, gammas[j] + 1.0)
    return total


def log_fold_case_i(fs, x):
    """log of the Beta-product form of ``f_1 (x) ... (x) f_m`` when every index > -1."""
    g = [f.gamma_index for f in fs]
    if any(gi is None or gi <= -1 for gi in g):
        raise WrongCaseError("case i needs every gamma > -1")
    return _log_beta_chain(g) + (len(fs) - 1) * math.log(x) + sum(_log_f(f, x) for f in fs)


def log_fold_case_ii(fs, x):
    """log of ``sum_i f_i prod_{j != i} f_j^I`` when every index is -1."""
    if any(f.gamma_index != -1 for f in fs):
        raise WrongCaseError("case ii needs every gamma = -1")
    lf = [_log_f(f, x) for f in fs]
    lfi = [_log_fI(f, x) for f in fs]
    total_i = sum(lfi)
    return log_sum_exp([lf[i] + total_i - lfi[i] for i in range(len(fs))])


def split_minus_one(items, index=lambda f: f.gamma_index):
    """Reorder so index -1 members come first; return (ordered, m)."""
    items = list(items)
    g = [index(it) for it in items]
    if any(gi is None or gi < -1 for gi in g):
        raise WrongCaseError("closed forms need regularly varying members with gamma >= -1")
    head = [it for it, gi in zip(items, g) if gi == -1]
    rest = [it for it, gi in zip(items, g) if gi != -1]
    return head + rest, len(head)


def log_fold_case_iii(fs, x):
    """log of the mixed form: index -1 members enter through f^I, the rest through Betas."""
    ordered, m = split_minus_one(fs)
    if m == len(ordered):
        raise WrongCaseError("case iii needs at least one gamma > -1; use case ii")
    above = ordered[m:]
    return (log_fold_case_i(above, x) if len(above) > 1 else _log_f(above[0], x)) \
        + sum(_log_fI(f, x) for f in ordered[:m])


def _log_thm12(ds, x, fold):
    ds = list(ds)
    _check_divergent(ds)
    _gammas(ds)
    a = _a_for(ds)
    return (len(ds) - 1) * math.log(a) - ds[0].alpha * x + fold([d.f for d in ds], x)


def log_predict_thm12_case_i(ds, x):
    return _log_thm12(ds, x, log_fold_case_i)


def predict_thm12_case_i(ds, x):
    """Beta-product closed form, every index > -1."""
    return math.exp(log_predict_thm12_case_i(ds, x))


def log_predict_thm12_case_ii(ds, x):
    return _log_thm12(ds, x, log_fold_case_ii)


def predict_thm12_case_ii(ds, x):
    """Sum-of-products closed form, every index = -1."""
    return math.exp(log_predict_thm12_case_ii(ds, x))


def predict_identical_case_ii(d, copies, x):
    """Identical-law specialization ``(n+1) a^n e^(-alpha x) f (f^I)^n``."""
    n = copies - 1
    a = _a_for([d] * copies)
    return math.exp(math.log(copies) + n * math.log(a) - d.alpha * x
                    + _log_f(d.f, x) + n * _log_fI(d.f, x))


def log_predict_thm12_case_iii(ds, x):
    return _log_thm12(ds, x, log_fold_case_iii)


def predict_thm12_case_iii(ds, x):
    """Mixed closed form; members are reordered so the index -1 block comes first."""
    return math.exp(log_predict_thm12_case_iii(ds, x))


# -- pairwise forms and the integral product ----------------------------------------

def _lemma22_case(f1, f2):
    for f in (f1, f2):
        if not f.regularly_varying or f.gamma_index < -1 or not f.divergent_integral:
            raise WrongCaseError("pairwise forms need regularly varying f with gamma >= -1 "
                                 "and divergent integral")
    g1, g2 = f1.gamma_index, f2.gamma_index
    if g1 > -1 and g2 > -1:
        return LEMMA22_I
    if g1 == -1 and g2 == -1:
        return LEMMA22_II
    return LEMMA22_III


def log_predict_lemma22(f1, f2, x):
    case = _lemma22_case(f1, f2)
    if case == LEMMA22_I:
        return (math.log(x) + _log_f(f1, x) + _log_f(f2, x)
                + ln_beta(f1.gamma_index + 1, f2.gamma_index + 1))
    if case == LEMMA22_II:
        return log_sum_exp([_log_f(f1, x) + _log_fI(f2, x), _log_f(f2, x) + _log_fI(f1, x)])
    minus, other = (f1, f2) if f1.gamma_index == -1 else (f2, f1)
    return _log_f(other, x) + _log_fI(minus, x)


def predict_lemma22(f1, f2, x):
    """Pairwise asymptotic form of ``f1 (x) f2 (x)``, case picked from declared indices."""
    return math.exp(log_predict_lemma22(f1, f2, x))


def log_fold_integral(fs, x, rtol=1e-6, per_decade=24, max_doublings=4):
    """log of ``int_0^x (f_1 (x) ... (x) f_n)(y) dy`` by tabulation and quadrature."""
    fs = list(fs)
    if len(fs) == 1:
        return _log_fI(fs[0], x)
    prev = None
    density = per_decade
    for _ in range(max_doublings + 1):
        g = _tabulate_fold(fs, x, density, rtol=1e-11)
        cur, _ = integrate_log(g.log_f, 0.0, x, points=[g.z_min], rtol=1e-11)
        if prev is not None and abs(math.expm1(cur - prev)) <= rtol:
            return cur
        prev = cur
        density *= 2
    return cur


def gnI_product_check(fs, x):
    """(int_0^x g_n, prod f_i^I(x)) for functions of index -1."""
    fs = list(fs)
    for f in fs:
        if f.gamma_index != -1:
            raise WrongCaseError("the integral-product relation needs every gamma = -1")
    rhs = math.exp(sum(_log_fI(f, x) for f in fs))
    if len(fs) == 1:
        return float(fs[0].integral(x)), rhs
    return math.exp(log_fold_integral(fs, x)), rhs


# -- exponential-power and oscillating families -------------------------------------

def prop41_log_integrand(t, C, beta, x):
    t = np.asarray(t, dtype=float)
    return C * x ** beta * ((1.0 - t) ** beta + t ** beta)


def log_predict_prop41(alpha, C, D, beta, n_fold, x):
    if not (0 < beta < 1) or not C > 0:
        raise DomainError("need C > 0 and 0 < beta < 1")
    if n_fold < 2:
        raise DomainError("n_fold must be >= 2")
    x = float(x)
    if n_fold == 2:
        val, _ = integrate_log(lambda t: prop41_log_integrand(t, C, beta, x), 0.0, 1.0,
                               points=[0.5], rtol=1e-12)
        return math.log(alpha) + math.log(x) - alpha * x + 2 * D + val
    f = TailFunctionSpec.exp_power(C, beta, D)
    return (n_fold - 1) * math.log(alpha) - alpha * x + log_function_convolve_n([f] * n_fold, x)


def predict_prop41(alpha, C, D, beta, n_fold, x):
    """Exp-power n-fold tail predictor, integral form (no mean-value points)."""
    return math.exp(log_predict_prop41(alpha, C, D, beta, n_fold, x))


def log_envelope_prop42(ds_with_bounds, x):
    entries = list(ds_with_bounds)
    ds = [e[0] for e in entries]
    _check_divergent(ds)
    gammas = []
    log_c = log_d = 0.0
    for d, f0, c, dd in entries:
        if not f0.regularly_varying or f0.gamma_index <= -1:
            raise WrongCaseError("envelope centers need regularly varying f0 with gamma > -1")
        if not 0 < c <= dd:
            raise DomainError(f"invalid bounds c={c}, d={dd}: need 0 < c <= d")
        gammas.append(f0.gamma_index)
        log_c += math.log(c)
        log_d += math.log(dd)
    a = _a_for(ds)
    n = len(ds) - 1
    alpha = ds[0].alpha
    center = (_log_beta_chain(gammas) + n * math.log(a) - alpha * x + n * math.log(x)
              + sum(_log_f(e[1], x) for e in entries))
    return center + log_c, center + log_d


def envelope_prop42(ds_with_bounds, x):
    """(prod c_i * center(x), prod d_i * center(x)) for oscillating members."""
    lo, hi = log_envelope_prop42(ds_with_bounds, x)
    return math.exp(lo), math.exp(hi)


# -- dispatcher --------------------------------------------------------------------

def classify_and_predict(ds):
    """Pick the predictor from exact class tags and declared indices."""
    ds = list(ds)
    if not ds:
        raise DomainError("need at least one distribution")
    _common_alpha(ds)
    _check_divergent(ds)
    a = _a_for(ds)
    if len(ds) == 1 or any(d.class_tag.name == "L1_not_11" for d in ds):
        return AsymptoticPrediction(THM11, a, lambda x: log_predict_thm11(ds, x))
    g = [d.f.gamma_index for d in ds]
    if all(gi > -1 for gi in g):
        return AsymptoticPrediction(THM12_I, a, lambda x: log_predict_thm12_case_i(ds, x))
    if all(gi == -1 for gi in g):
        return AsymptoticPrediction(THM12_II, a, lambda x: log_predict_thm12_case_ii(ds, x))
    return AsymptoticPrediction(THM12_III, a, lambda x: log_predict_thm12_case_iii(ds, x))
