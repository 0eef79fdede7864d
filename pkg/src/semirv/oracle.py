"""Ground-truth convolution quantities with no asymptotic approximation.

* ``function_convolve`` / ``function_convolve_n``: ``f1 (x) f2 (x) ...`` by
  adaptive quadrature (log-domain integrands), inner folds tabulated and
  interpolated with a monotone cubic rule.
* ``conv_tail_2``: ``P(X1 + X2 > x)`` by quadrature, accurate deep in the tail.
* ``conv_tail_n_grid``: exponentially tilted grid convolution that returns a
  two-sided Stieltjes bracket instead of a point estimate.
* ``lattice_conv_tail``: exact summation for lattice laws.
* ``mc_conv_tail``: Monte Carlo with a Wilson interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.signal import fftconvolve

from . import rng
from .errors import AccuracyError, DomainError, UsageError
from .quad import integrate_log, log_sum_exp

FUNC_RTOL = 1e-9
TAIL_RTOL = 1e-11
DIRECT_CELLS = 4096
Z95 = 1.959963984540054


# -- function convolutions ----------------------------------------------------

def _conv_points(b1, b2, x):
    pts = {0.5 * x}
    pts.update(b for b in b2 if 0 < b < x)
    pts.update(x - b for b in b1 if 0 < b < x)
    return sorted(pts)


def log_function_convolve(f1, f2, x, rtol=FUNC_RTOL):
    """log of ``int_0^x f1(x-y) f2(y) dy``."""
    x = float(x)
    if x < 0:
        raise DomainError("function_convolve needs x >= 0")
    if x == 0:
        return -math.inf

    def log_integrand(y):
        return f1.log_f(x - y) + f2.log_f(y)

    pts = _conv_points(f1.breakpoints(0.0, x), f2.breakpoints(0.0, x), x)
    val, _ = integrate_log(log_integrand, 0.0, x, points=pts, rtol=rtol)
    return val


def function_convolve(f1, f2, x):
    """``f1 (x) f2 (x) = int_0^x f1(x-y) f2(y) dy``."""
    return math.exp(log_function_convolve(f1, f2, x))


class _Tabulated:
    """Monotone cubic interpolant of ``log g`` against ``log z`` on ``(0, z_max]``.

    Below the first node ``g`` is continued as ``c z^power`` (``power`` is the
    fold count minus one, the exact small-``z`` order of an iterated
    convolution of functions positive at the origin).
    """

    def __init__(self, z, log_g, power):
        self.z_min = z[0]
        self.log_g0 = log_g[0]
        self.power = power
        self.interp = PchipInterpolator(np.log(z), log_g, extrapolate=True)

    def log_f(self, z):
        z = np.asarray(z, dtype=float)
        zc = np.maximum(z, self.z_min)
        inner = self.interp(np.log(zc))
        with np.errstate(divide="ignore"):
            below = self.log_g0 + self.power * (np.log(np.maximum(z, 1e-300)) - math.log(self.z_min))
        return np.where(z >= self.z_min, inner, below)

    def breakpoints(self, a, b):
        return []


def _nodes(x, per_decade):
    z_min = min(1e-3, 1e-3 * x)
    decades = math.log10(x / z_min)
    n = max(16, int(math.ceil(decades * per_decade)) + 1)
    return np.geomspace(z_min, x, n)


def _tabulate_fold(fs, x, per_decade, rtol):
    """Tabulated log of ``f_1 (x) ... (x) f_m`` on ``(0, x]``."""
    z = _nodes(x, per_decade)
    g = fs[0]
    for m in range(1, len(fs)):
        logs = np.array([log_function_convolve(g, fs[m], zi, rtol=rtol) for zi in z])
        g = _Tabulated(z, logs, power=m)
    return g


def log_function_convolve_n(fs, x, rtol=1e-6, per_decade=24, max_doublings=4):
    """log of ``f_1 (x) ... (x) f_n (x)``.

    For ``n >= 3`` the inner ``(n-1)``-fold convolution is tabulated on a
    geometric grid and interpolated monotonically; the node density is doubled
    until two successive results agree to ``rtol`` (relative).
    """
    fs = list(fs)
    if len(fs) < 2:
        raise DomainError("function_convolve_n needs at least two functions")
    x = float(x)
    if x < 0:
        raise DomainError("function_convolve_n needs x >= 0")
    if x == 0:
        return -math.inf
    if len(fs) == 2:
        return log_function_convolve(fs[0], fs[1], x)
    prev = None
    density = per_decade
    for _ in range(max_doublings + 1):
        inner = _tabulate_fold(fs[:-1], x, density, rtol=1e-11)
        cur = log_function_convolve(inner, fs[-1], x, rtol=1e-11)
        if prev is not None and abs(math.expm1(cur - prev)) <= rtol:
            return cur
        prev = cur
        density *= 2
    raise AccuracyError(
        f"iterated convolution at x={x} did not settle to {rtol:g}",
        estimate=abs(math.expm1(cur - prev)))


def function_convolve_n(fs, x, rtol=1e-6):
    return math.exp(log_function_convolve_n(fs, x, rtol=rtol))


# -- two-fold distribution tails ---------------------------------------------

def _lattice_continuous_log_tail(lat, cont, x):
    """log P(K + X > x) by conditioning on the lattice variable K."""
    top = math.floor(x - cont.x0)  # K > x - x0 forces the event
    terms = []
    if top >= lat.k0:
        ks = np.arange(lat.k0, top + 1, dtype=float)
        terms.append(lat.log_pmf(ks) + cont.log_tail(x - ks))
    terms.append(np.atleast_1d(lat.log_tail(max(top, lat.k0 - 1))))
    return log_sum_exp(np.concatenate(terms))


def log_conv_tail_2(d1, d2, x, rtol=TAIL_RTOL):
    """log P(X1 + X2 > x)."""
    x = float(x)
    if d1.lattice and d2.lattice:
        return _log_lattice_tail([d1, d2], int(math.floor(x)))
    if d1.lattice:
        return _lattice_continuous_log_tail(d1, d2, x)
    if d2.lattice:
        return _lattice_continuous_log_tail(d2, d1, x)
    if x < d1.x0 + d2.x0:
        return 0.0
    terms = []
    # X2 at its head atom
    atom2 = d2.head_atom
    if atom2 > 0:
        terms.append(math.log(atom2) + float(d1.log_tail(x - d2.x0)))
    # continuous part of X2 beyond x - x0_1 always pushes the sum past x
    cut = x - d1.x0
    terms.append(float(d2.log_h(max(cut, d2.x0))))
    if cut > d2.x0:
        def log_integrand(y):
            return d1.log_tail(x - y) + d2.log_density(y)

        pts = {0.5 * (d2.x0 + cut)}
        pts.update(d2.f.breakpoints(d2.x0, cut))
        pts.update(x - b for b in d1.f.breakpoints(d1.x0, x - d2.x0))
        val, _ = integrate_log(log_integrand, d2.x0, cut,
                               points=sorted(p for p in pts if d2.x0 < p < cut), rtol=rtol)
        terms.append(val)
    return min(0.0, log_sum_exp(terms))


def conv_tail_2(d1, d2, x):
    """``P(X1 + X2 > x)`` for independent draws from ``d1`` and ``d2``."""
    return math.exp(log_conv_tail_2(d1, d2, x))


# -- grid convolution -----------------------------------------------------------

MASS_TO_CELL = "mass_to_cell"           # mass at the left cell edge: lower bound
MASS_TO_RIGHT_EDGE = "mass_to_right_edge"  # mass at the right edge: upper bound


@dataclass(frozen=True)
class GridConvolutionPlan:
    step: float
    x_max: float
    boundary: str = MASS_TO_RIGHT_EDGE
    rel_tol: float | None = None

    def __post_init__(self):
        if not self.step > 0 or not self.x_max > 0:
            raise DomainError("grid step and x_max must be positive")
        if self.boundary not in (MASS_TO_CELL, MASS_TO_RIGHT_EDGE):
            raise DomainError(f"unknown boundary rule {self.boundary!r}")


@dataclass(frozen=True)
class GridTails:
    x: np.ndarray
    log_lower: np.ndarray
    log_upper: np.ndarray
    boundary: str

    @property
    def lower(self):
        return np.exp(self.log_lower)

    @property
    def upper(self):
        return np.exp(self.log_upper)

    @property
    def log_value(self):
        return self.log_lower if self.boundary == MASS_TO_CELL else self.log_upper

    @property
    def value(self):
        return np.exp(self.log_value)

    @property
    def log_mid(self):
        return np.logaddexp(self.log_lower, self.log_upper) - math.log(2.0)

    @property
    def rel_width(self):
        """(upper - lower) / midpoint."""
        return 2.0 * np.tanh(0.5 * (self.log_upper - self.log_lower))

    def contains(self, value, slack=0.0):
        v = np.asarray(value, dtype=float)
        return bool(np.all((v >= self.lower * (1 - slack)) & (v <= self.upper * (1 + slack))))


def _tilted_cells(d, step, length, tilt):
    """Tilted cell masses exp(tilt a_k) P(X in [a_k, a_k+step)) and overflow log-prob."""
    n = int(math.ceil(length / step))
    edges = d.x0 + step * np.arange(n + 1)
    lh = d.log_h(edges)
    lh[0] = 0.0  # P(X >= x0) = 1, atom included in cell 0
    with np.errstate(divide="ignore"):
        frac = -np.expm1(lh[1:] - lh[:-1])
    log_m = lh[:-1] + np.log(np.maximum(frac, 0.0))
    log_t = tilt * edges[:-1] + log_m
    return np.exp(log_t), float(lh[-1])


def _convolve(a, b):
    if min(a.size, b.size) < DIRECT_CELLS:
        return np.convolve(a, b)
    out = fftconvolve(a, b)
    return np.maximum(out, 0.0)


def conv_tail_n_grid(ds, plan, x_grid):
    """Bracketed ``P(X1 + ... + Xn > x)`` by discretized convolution.

    Every density is binned into cells of width ``plan.step``.  Placing each
    cell's mass at its left edge gives a stochastically smaller sum (lower
    bound), at its right edge a larger one (upper bound).  Masses are tilted
    by ``exp(alpha a)`` so tails far below the double range stay representable.
    """
    ds = list(ds)
    if any(d.lattice for d in ds):
        raise UsageError("conv_tail_n_grid needs continuous laws")
    xg = np.atleast_1d(np.asarray(x_grid, dtype=float))
    x0_sum = sum(d.x0 for d in ds)
    if plan.x_max < xg.max() + x0_sum:
        raise DomainError("x_max must be >= max(x_grid) + sum of head cutoffs")
    step = plan.step
    tilt = min(d.alpha for d in ds)
    conv = None
    log_ov = []
    for i, d in enumerate(ds):
        others = x0_sum - d.x0
        cells, lov = _tilted_cells(d, step, plan.x_max - others - d.x0, tilt)
        log_ov.append(lov)
        conv = cells if conv is None else _convolve(conv, cells)
    pos = x0_sum + step * np.arange(conv.size)
    n = len(ds)
    # P(some X_i overflows its grid) = 1 - prod(1 - o_i); each overflow exceeds x_max
    o = np.exp(log_ov)
    ov = -math.expm1(math.fsum(np.log1p(-np.minimum(o, 1.0))))
    log_overflow = math.log(ov) if ov > 0 else log_sum_exp(log_ov)

    def log_tail_sum(t):
        sel = pos > t
        if not np.any(sel):
            return -math.inf
        with np.errstate(divide="ignore"):
            lt = np.log(conv[sel]) - tilt * (pos[sel] - t)
        return -tilt * t + log_sum_exp(lt)

    lower = np.array([min(0.0, log_sum_exp([log_tail_sum(x), log_overflow])) for x in xg])
    upper = np.array([min(0.0, log_sum_exp([log_tail_sum(x - n * step), log_overflow]))
                      for x in xg])
    out = GridTails(xg, lower, upper, plan.boundary)
    if plan.rel_tol is not None:
        worst = float(np.max(out.rel_width))
        if worst > plan.rel_tol:
            raise AccuracyError(
                f"grid bracket width {worst:.3g} exceeds {plan.rel_tol:g}; use a smaller step",
                estimate=worst)
    return out


# -- lattice sums ------------------------------------------------------------------

def _lattice_partial(ds, k):
    """pmf of the partial sum on 0..k and its tail P(S > k), all by exact sums."""
    d = ds[0]
    ks = np.arange(0, k + 1, dtype=float)
    pm = np.where(ks >= d.k0, d.pmf(ks), 0.0)
    tail = d.tail(float(k))
    for d in ds[1:]:
        px = np.where(ks >= d.k0, d.pmf(ks), 0.0)
        tx = d.tail(k - ks)  # P(X > k - i) for every i <= k
        tail = math.fsum((pm * tx).tolist()) + tail
        pm = np.convolve(pm, px)[: k + 1]
    return pm, tail


def lattice_conv_tail(ds, k):
    """Exact ``P(X1 + ... + Xn > k)`` for lattice laws on the naturals."""
    ds = list(ds)
    if not all(d.lattice for d in ds):
        raise UsageError("lattice_conv_tail needs lattice laws")
    k = int(k)
    if k < 0:
        return 1.0
    return _lattice_partial(ds, k)[1]


def _log_lattice_tail(ds, k):
    val = lattice_conv_tail(ds, k)
    return math.log(val) if val > 0 else -math.inf


# -- Monte Carlo ------------------------------------------------------------------

@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    samples: int
    hits: int

    @property
    def half_width(self):
        return 0.5 * (self.ci_high - self.ci_low)

    def contains(self, value):
        return self.ci_low <= value <= self.ci_high


def wilson_interval(hits, n, z=Z95):
    if n <= 0:
        raise DomainError("sample count must be positive")
    p = hits / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


def mc_conv_tail(ds, x, sample_count, seed, chunk=1_000_000):
    """Monte Carlo ``P(sum X_i > x)``; stream ``i`` drives distribution ``i``."""
    ds = list(ds)
    if sample_count < 10_000:
        raise DomainError("mc_conv_tail needs at least 1e4 samples")
    x = float(x)
    hits = 0
    done = 0
    block = 0
    while done < sample_count:
        m = min(chunk, sample_count - done)
        total = np.zeros(m)
        for i, d in enumerate(ds):
            total += d.sample_values(seed, rng.block_stream(i, block), m)
        hits += int(np.count_nonzero(total > x))
        done += m
        block += 1
    lo, hi = wilson_interval(hits, sample_count)
    return MCEstimate(hits / sample_count, lo, hi, sample_count, hits)


# -- max vs pairwise sums ------------------------------------------------------

def max_tail(ds, x):
    """P(max X_i > x) = 1 - prod(1 - tail_i(x))."""
    return -math.expm1(math.fsum(math.log1p(-d.tail(x)) for d in ds))


def max_to_pairwise_ratio(ds, x):
    """P(max > x) over the sum of all ordered pairwise convolution tails."""
    ds = list(ds)
    terms = [log_conv_tail_2(ds[i], ds[j], x)
             for i in range(len(ds)) for j in range(len(ds)) if i != j]
    return max_tail(ds, x) / math.exp(log_sum_exp(terms))
