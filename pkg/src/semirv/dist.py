"""Distributions with tail ``min(1, exp(-alpha x) f(x))``.

Continuous laws live on ``[x0, inf)`` with a possible atom at the head cutoff
``x0``; lattice laws live on the integers ``>= ceil(x0)``.  Beyond ``x0`` the
tail is exactly ``exp(-alpha x) f(x)``, so asymptotic statements about the
tail hold as identities there.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import rng
from .errors import DomainError, InvalidConstructionError, UsageError
from .quad import integrate
from .tailfn import (TailFunctionSpec, _Constant, _ExpPower, _Karamata, _LogLogPower,
                     _LogPower, _PiecewiseOscillating, _SAW_EDGES, _SAW_ICPT, _SAW_SLOPE)

CONTINUOUS = "continuous"
LATTICE = "lattice"
CACHE_SIZE = 1024
# deepest log-tail covered by the quantile cache; 53-bit uniforms stop near -37
_CACHE_FLOOR = -60.0


@dataclass(frozen=True)
class ClassTag:
    name: str            # "L11", "L1_not_11" or "L2"
    alpha: float
    gamma: float | None = None

    def __str__(self):
        if self.name == "L11":
            return f"L11({self.alpha:g}, {self.gamma:g})"
        return f"{self.name}({self.alpha:g})"


def class_tag_for(alpha, f):
    if not f.divergent_integral:
        return ClassTag("L2", alpha)
    if f.regularly_varying and f.gamma_index >= -1:
        return ClassTag("L11", alpha, f.gamma_index)
    return ClassTag("L1_not_11", alpha)


@dataclass(frozen=True)
class SampleBatch:
    values: np.ndarray
    seed: int
    stream_id: int

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# seed={self.seed}, stream={self.stream_id}\n")
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["value"])
            for v in self.values:
                w.writerow([repr(float(v))])


@dataclass(frozen=True, eq=False)
class SemiRVDistribution:
    alpha: float
    f: TailFunctionSpec
    kind: str
    x0: float
    class_tag: ClassTag
    # (x, log-tail) pairs on [x0, ...) used to bracket quantile solves
    _cache_x: np.ndarray = field(default=None, repr=False)
    _cache_lt: np.ndarray = field(default=None, repr=False)

    # -- basic shape ----------------------------------------------------------
    @property
    def lattice(self):
        return self.kind == LATTICE

    @property
    def k0(self):
        """Smallest support point of a lattice law."""
        return int(math.ceil(self.x0 - 1e-12))

    @property
    def support_start(self):
        return float(self.k0) if self.lattice else self.x0

    def log_h(self, x):
        """``-alpha x + log f(x)``, the uncapped log tail."""
        x = np.asarray(x, dtype=float)
        return -self.alpha * x + self.f.log_f(x)

    @property
    def head_atom(self):
        """Mass of the atom at ``x0`` (continuous laws only)."""
        return -math.expm1(min(0.0, float(self.log_h(self.x0))))

    # -- tail, density, pmf ---------------------------------------------------
    def log_tail(self, x):
        x = np.asarray(x, dtype=float)
        if self.lattice:
            k = np.floor(x)
            inside = k >= self.k0
            lt = np.minimum(0.0, self.log_h(np.where(inside, k, self.k0)))
            return np.where(inside, lt, 0.0)
        inside = x >= self.x0
        lt = np.minimum(0.0, self.log_h(np.where(inside, x, self.x0)))
        return np.where(inside, lt, 0.0)

    def tail(self, x):
        out = np.exp(self.log_tail(x))
        return float(out) if np.ndim(out) == 0 else out

    def log_density(self, x):
        if self.lattice:
            raise UsageError("density is defined for continuous laws; use pmf")
        x = np.asarray(x, dtype=float)
        inside = x >= self.x0
        xs = np.where(inside, x, self.x0)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.log_h(xs) + np.log(self.alpha - self.f.dlog(xs))
        return np.where(inside, val, -np.inf)

    def density(self, x):
        out = np.exp(self.log_density(x))
        return float(out) if np.ndim(out) == 0 else out

    def log_pmf(self, k):
        if not self.lattice:
            raise UsageError("pmf is defined for lattice laws; use density")
        k = np.asarray(k, dtype=float)
        if np.any(k != np.floor(k)):
            raise DomainError("pmf needs integer arguments")
        k0 = self.k0
        ks = np.maximum(k, k0 + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            # h(k-1) - h(k) = h(k) * expm1(log h(k-1) - log h(k))
            lh = self.log_h(ks)
            body = lh + np.log(np.expm1(self.log_h(ks - 1) - lh))
            first = math.log(-math.expm1(min(0.0, float(self.log_h(k0))))) \
                if self.log_h(k0) < 0 else -math.inf
        out = np.where(k > k0, body, np.where(k == k0, first, -np.inf))
        return out

    def pmf(self, k):
        out = np.exp(self.log_pmf(k))
        return float(out) if np.ndim(out) == 0 else out

    # -- quantiles and sampling ----------------------------------------------
    def _solve_level(self, level_log):
        """x >= x0 with log_h(x) = level_log (level_log <= log_h(x0))."""
        lv = np.atleast_1d(np.asarray(level_log, dtype=float))
        cx, clt = self._cache_x, self._cache_lt
        # clt is decreasing; bracket index j with clt[j] >= lv > clt[j+1]
        j = np.searchsorted(-clt, -lv, side="right") - 1
        j = np.clip(j, 0, cx.size - 1)
        lo = cx[j].copy()
        hi = np.where(j + 1 < cx.size, cx[np.minimum(j + 1, cx.size - 1)], np.nan)
        deep = ~np.isfinite(hi)
        if np.any(deep):
            hi[deep] = self._expand_bracket(lo[deep], lv[deep])
        x = np.clip(lo + (hi - lo) * 0.5, lo, hi)
        active = np.ones(x.shape, dtype=bool)
        for _ in range(200):
            xa, la = x[active], lv[active]
            g = self.log_h(xa) - la
            dg = -self.alpha + self.f.dlog(xa)
            lo_a = np.where(g > 0, xa, lo[active])
            hi_a = np.where(g < 0, xa, hi[active])
            with np.errstate(divide="ignore", invalid="ignore"):
                step = xa - g / dg
            bad = ~np.isfinite(step) | (step < lo_a) | (step > hi_a)
            new = np.where(bad, 0.5 * (lo_a + hi_a), step)
            new = np.where(g == 0, xa, new)
            tol = np.maximum(1e-13, 2 * np.spacing(np.abs(new)))
            done = (np.abs(new - xa) <= tol) | (hi_a - lo_a <= tol) | (g == 0)
            x[active], lo[active], hi[active] = new, lo_a, hi_a
            idx = np.flatnonzero(active)
            active[idx[done]] = False
            if not np.any(active):
                break
        return x

    def _expand_bracket(self, lo, lv):
        hi = lo + 1.0
        for _ in range(2000):
            need = self.log_h(hi) > lv
            if not np.any(need):
                return hi
            hi = np.where(need, lo + 2.0 * (hi - lo), hi)
        raise InvalidConstructionError("could not bracket a tail level", x=float(hi.max()))

    def _invert_tail(self, log_level):
        """Smallest support point x with log_tail(x) <= log_level."""
        lv = np.atleast_1d(np.asarray(log_level, dtype=float))
        top = float(self.log_h(self.support_start))
        x = np.full(lv.shape, self.support_start)
        deep = lv < min(0.0, top)
        if np.any(deep):
            x[deep] = self._solve_level(lv[deep])
        if self.lattice:
            k = np.maximum(self.k0, np.ceil(x))
            # undo ceil overshoot caused by rounding in the root
            back = (k - 1 >= self.k0) & (self.log_tail(k - 1) <= lv)
            x = np.where(back, k - 1, k)
        return x

    def quantile(self, u):
        """x with tail(x) = 1 - u (smallest such integer for lattice laws)."""
        u_arr = np.asarray(u, dtype=float)
        if np.any((u_arr <= 0) | (u_arr >= 1)):
            raise DomainError("quantile needs 0 < u < 1")
        out = self._invert_tail(np.log1p(-u_arr)).reshape(u_arr.shape)
        return float(out) if out.ndim == 0 else out

    def sample_values(self, seed, stream_id, count):
        u = rng.uniforms(seed, stream_id, count)
        # P(X > x) = tail(x): invert against U directly for deep-tail precision
        return self._invert_tail(np.log(u))

    def sample(self, seed, stream_id, count):
        if count < 1:
            raise DomainError("count must be >= 1")
        return SampleBatch(self.sample_values(seed, stream_id, count), int(seed), int(stream_id))

    # -- exponential moment ---------------------------------------------------
    def exp_moment_partial(self, s):
        """int_{x0}^s exp(alpha y) dV(y), the truncated exponential moment."""
        s = float(s)
        if not s > self.x0:
            raise DomainError("exp_moment_partial needs s > x0")
        if self.lattice:
            ks = np.arange(self.k0, math.floor(s) + 1, dtype=float)
            return math.fsum(np.exp(self.alpha * ks + self.log_pmf(ks)))
        atom = self.head_atom * math.exp(self.alpha * self.x0)
        f = self.f

        def tilted_density(y):
            return f.f(y) * (self.alpha - f.dlog(y))

        res = integrate(tilted_density, self.x0, s, points=f.breakpoints(self.x0, s),
                        rtol=1e-10)
        return atom + res.value

    # -- serialization --------------------------------------------------------
    def to_json(self):
        return {"alpha": self.alpha, "f": self.f.to_json(), "kind": self.kind}

    @classmethod
    def from_json(cls, obj):
        return make_distribution(float(obj["alpha"]), TailFunctionSpec.from_json(obj["f"]),
                                 obj.get("kind", CONTINUOUS))

    def __repr__(self):
        return (f"SemiRVDistribution(alpha={self.alpha:g}, f={self.f!r}, kind={self.kind}, "
                f"x0={self.x0:.6g}, class={self.class_tag})")


# -- construction ---------------------------------------------------------------

def _piecewise_threshold(alpha, impl):
    # sup of points where alpha f <= f' ; beyond 5/alpha the bound f >= x rules it out
    worst = 0.0
    k = 0
    limit = 5.0 / alpha + 1.0
    while 4.0 ** k <= limit:
        scale = 4.0 ** k
        for i in range(4):
            s = _SAW_SLOPE[i]
            if s <= 0:
                continue
            lo, hi = _SAW_EDGES[i] * scale, _SAW_EDGES[i + 1] * scale
            thr = (s / alpha - _SAW_ICPT[i] * scale) / s
            if thr >= lo:
                worst = max(worst, min(hi, thr))
        k += 1
    return worst


def _karamata_threshold(alpha, impl):
    # dense grid check plus a monotone sufficient condition at the grid end
    def margin(x):
        return alpha - impl.dlog(x)

    cand = 0.0
    for _ in range(8):
        grid = np.linspace(0.0, 10.0 * cand + 100.0, 20001)
        m = margin(grid)
        viol = grid[m <= 0]
        end = grid[-1]
        e = math.exp(-end)
        c1 = abs(impl.c1)
        envelope = alpha * (1 - c1 * e) - c1 * e - (1 + c1 * e) * abs(impl.k) * (1 + end) ** (-impl.p)
        new = float(viol.max()) if viol.size else 0.0
        if envelope > 0 and new <= cand + 1e-12:
            return new
        if envelope > 0:
            cand = new
            continue
        cand = max(new, end)
    raise InvalidConstructionError(
        "alpha f - f' stays nonpositive beyond every candidate cutoff", x=cand)


def monotone_threshold(alpha, f):
    """Point beyond which exp(-alpha x) f(x) is nonincreasing."""
    impl = f.impl
    if isinstance(impl, _Constant):
        return 0.0
    if isinstance(impl, _LogPower):
        return max(0.0, impl.gamma / alpha - 1.0)
    if isinstance(impl, _LogLogPower):
        g = lambda x: alpha * (math.e + x) * math.log(math.e + x) - impl.gamma
        if g(0.0) >= 0:
            return 0.0
        hi = 1.0
        while g(hi) < 0:
            hi *= 2
        return brentq(g, 0.0, hi, xtol=1e-14)
    if isinstance(impl, _ExpPower):
        return (impl.C * impl.beta / alpha) ** (1.0 / (1.0 - impl.beta))
    if isinstance(impl, _PiecewiseOscillating):
        return _piecewise_threshold(alpha, impl)
    if isinstance(impl, _Karamata):
        return _karamata_threshold(alpha, impl)
    raise InvalidConstructionError(f"no monotonicity rule for {f.family}")


def _build_cache(alpha, f, x0):
    start = float(-alpha * x0 + f.log_f(x0))
    top = min(0.0, start)
    # find x where the log tail reaches the cache floor
    hi = x0 + 1.0
    while -alpha * hi + float(f.log_f(hi)) > _CACHE_FLOOR:
        hi = x0 + 2.0 * (hi - x0)
    xs = np.linspace(x0, hi, CACHE_SIZE)
    lt = -alpha * xs + f.log_f(xs)
    lt[0] = top if start <= 0 else start
    return xs, lt


def make_distribution(alpha, f, kind=CONTINUOUS):
    """Build the law with tail ``min(1, exp(-alpha x) f(x))`` beyond its head cutoff."""
    alpha = float(alpha)
    if not (alpha > 0 and math.isfinite(alpha)):
        raise InvalidConstructionError("alpha must be a finite positive number")
    kind = kind.lower() if isinstance(kind, str) else kind
    if kind not in (CONTINUOUS, LATTICE):
        raise InvalidConstructionError(f"unknown kind {kind!r}")
    m = monotone_threshold(alpha, f)
    log_h = lambda x: -alpha * x + float(f.log_f(x))
    if log_h(m) <= 0:
        x0 = m
    else:
        hi = m + 1.0
        while log_h(hi) > 0:
            hi = m + 2.0 * (hi - m)
        x0 = brentq(log_h, m, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        if log_h(x0) > 0:
            x0 = float(np.nextafter(x0, np.inf))
    cx, clt = _build_cache(alpha, f, x0)
    return SemiRVDistribution(alpha, f, kind, float(x0), class_tag_for(alpha, f), cx, clt)


def exponential(rate=1.0):
    return make_distribution(rate, TailFunctionSpec.constant(1.0))


def geometric(alpha=math.log(2.0)):
    return make_distribution(alpha, TailFunctionSpec.constant(1.0, lattice=True), LATTICE)


# module-level operation names
def tail(dist, x):
    return dist.tail(x)


def density(dist, x):
    return dist.density(x)


def pmf(dist, k):
    return dist.pmf(k)


def quantile(dist, u):
    return dist.quantile(u)


def sample(dist, seed, stream_id, count):
    return dist.sample(seed, stream_id, count)


def exp_moment_partial(dist, s):
    return dist.exp_moment_partial(s)
