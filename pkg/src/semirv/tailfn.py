"""Parameterized slowly/regularly varying functions ``f`` and their integrals.

A distribution in the semi-regular-variation class has tail
``exp(-alpha x) f(x)``.  The families below cover the regularly varying
shapes (constant, power, log-power), an exponential-power shape that is
long-tailed but not regularly varying, a piecewise-linear sawtooth that
oscillates between ``x`` and ``2x``, and a Karamata-representation builder.

Every family is evaluated through ``log f`` and the logarithmic derivative
``f'/f`` so that log-domain integrands never form ``f`` explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, InvalidSpecError, OneSidedDerivativeError
from .quad import integrate

FAMILIES = ("constant", "log_power", "loglog_power", "exp_power",
            "piecewise_oscillating", "karamata")

# Sawtooth segments on one period [1, 4) of r = x / 4^k:  g(r) = slope*r + icpt
_SAW_EDGES = np.array([1.0, 2.0, 2.5, 3.0, 4.0])
_SAW_SLOPE = np.array([2.0, -3.0, 1.0, 5.0])
_SAW_ICPT = np.array([0.0, 10.0, 0.0, -12.0])

QUAD_RTOL = 1e-10


def _as_array(x):
    return np.asarray(x, dtype=float)


class _Family:
    """Per-family formulas; params are validated by the constructor."""

    gamma_index: float | None = None   # None: not regularly varying
    divergent: bool = True
    closed_integral = False

    def log_f(self, x):
        raise NotImplementedError

    def dlog(self, x):
        """Logarithmic derivative f'/f (right derivative at breakpoints)."""
        raise NotImplementedError

    def integral(self, x):
        raise NotImplementedError

    def breakpoints(self, a, b):
        return []

    def left_dlog(self, x):
        return self.dlog(x)


class _Constant(_Family):
    closed_integral = True

    def __init__(self, c=1.0):
        if not c > 0:
            raise InvalidSpecError("constant family needs c > 0")
        self.c = c
        self.gamma_index = 0.0

    def log_f(self, x):
        return np.full_like(_as_array(x), math.log(self.c))

    def dlog(self, x):
        return np.zeros_like(_as_array(x))

    def integral(self, x):
        return self.c * _as_array(x)


class _LogPower(_Family):
    """f(x) = c (1+x)^gamma."""

    closed_integral = True

    def __init__(self, gamma, c=1.0):
        if not c > 0:
            raise InvalidSpecError("log_power family needs c > 0")
        self.gamma, self.c = gamma, c
        self.gamma_index = gamma
        self.divergent = gamma >= -1

    def log_f(self, x):
        return math.log(self.c) + self.gamma * np.log1p(_as_array(x))

    def dlog(self, x):
        return self.gamma / (1.0 + _as_array(x))

    def integral(self, x):
        lx = np.log1p(_as_array(x))
        g1 = self.gamma + 1.0
        if g1 == 0.0:
            return self.c * lx
        return self.c * np.expm1(g1 * lx) / g1


class _LogLogPower(_Family):
    """f(x) = c (ln(e+x))^gamma, slowly varying for every gamma."""

    def __init__(self, gamma, c=1.0):
        if not c > 0:
            raise InvalidSpecError("loglog_power family needs c > 0")
        self.gamma, self.c = gamma, c
        self.gamma_index = 0.0

    def log_f(self, x):
        return math.log(self.c) + self.gamma * np.log(np.log(math.e + _as_array(x)))

    def dlog(self, x):
        u = math.e + _as_array(x)
        return self.gamma / (u * np.log(u))


class _ExpPower(_Family):
    """f(x) = exp(C x^beta + D), 0 < beta < 1, C > 0."""

    def __init__(self, C, beta, D=0.0):
        if not C > 0:
            raise InvalidSpecError("exp_power family needs C > 0")
        if not 0 < beta < 1:
            raise InvalidSpecError("exp_power family needs 0 < beta < 1")
        self.C, self.beta, self.D = C, beta, D
        self.gamma_index = None

    def log_f(self, x):
        return self.C * _as_array(x) ** self.beta + self.D

    def dlog(self, x):
        x = _as_array(x)
        with np.errstate(divide="ignore"):
            return self.C * self.beta * x ** (self.beta - 1.0)


class _PiecewiseOscillating(_Family):
    """Sawtooth between c*x and 2c*x on every period [4^k, 4^(k+1)).

    Extended by the constant 2c on [0, 1) so it is positive at the origin.
    """

    def __init__(self, c=1.0):
        if not c > 0:
            raise InvalidSpecError("piecewise_oscillating family needs c > 0")
        self.c = c
        self.gamma_index = None

    @staticmethod
    def _period(x):
        k = np.floor(np.log(np.maximum(x, 1.0)) / math.log(4.0))
        scale = 4.0 ** k
        # repair floating-point misplacement at period edges
        low = scale > x
        k = np.where(low & (x >= 1), k - 1, k)
        scale = 4.0 ** k
        high = 4.0 * scale <= x
        k = np.where(high, k + 1, k)
        return 4.0 ** k

    def _segment(self, x):
        scale = self._period(x)
        r = x / scale
        seg = np.clip(np.searchsorted(_SAW_EDGES, r, side="right") - 1, 0, 3)
        return scale, r, seg

    def saw(self, x):
        x = _as_array(x)
        scale, r, seg = self._segment(x)
        val = scale * (_SAW_SLOPE[seg] * r + _SAW_ICPT[seg])
        return np.where(x < 1.0, 2.0, val)

    def saw_slope(self, x):
        x = _as_array(x)
        _, _, seg = self._segment(x)
        return np.where(x < 1.0, 0.0, _SAW_SLOPE[seg])

    def log_f(self, x):
        return math.log(self.c) + np.log(self.saw(x))

    def dlog(self, x):
        return self.saw_slope(x) / self.saw(x)

    def left_dlog(self, x):
        x = _as_array(x)
        h = np.maximum(np.abs(x), 1.0) * 1e-9
        return self.saw_slope(x - h) / self.saw(x)

    def breakpoints(self, a, b):
        out = []
        if a < 1.0 <= b:
            out.append(1.0)
        k = 0
        while 4.0 ** k <= b:
            for m in (1.0, 2.0, 2.5, 3.0):
                p = m * 4.0 ** k
                if a < p <= b:
                    out.append(p)
            k += 1
        return sorted(set(out))

    def is_breakpoint(self, x):
        return x == 1.0 or x in self.breakpoints(x / 2, x)


class _Karamata(_Family):
    """f(x) = c(x) exp(int_a^x eps(y) dy) with
    c(x) = c0 (1 + c1 e^(-x)) and eps(y) = k (1+y)^(-p).
    """

    def __init__(self, c0=1.0, c1=0.0, k=0.0, p=1.0, a=1.0):
        if not c0 > 0:
            raise InvalidSpecError("karamata family needs c0 > 0")
        if not c1 > -1:
            raise InvalidSpecError("karamata family needs c1 > -1 for positivity")
        if not p > 0:
            raise InvalidSpecError("karamata family needs p > 0 so eps -> 0")
        if not a >= 0:
            raise InvalidSpecError("karamata family needs a >= 0")
        self.c0, self.c1, self.k, self.p, self.a = c0, c1, k, p, a
        if k == 0 or p > 1:
            self.gamma_index = 0.0
        elif p == 1:
            self.gamma_index = k
            self.divergent = k >= -1
        else:
            self.gamma_index = None
            self.divergent = k > 0

    def eps(self, y):
        return self.k * (1.0 + _as_array(y)) ** (-self.p)

    def _log_c(self, x):
        return math.log(self.c0) + np.log1p(self.c1 * np.exp(-x))

    def eps_integral(self, x):
        """int_a^x eps(y) dy by adaptive quadrature, one value per x."""
        x = _as_array(x)
        out = np.empty(x.shape)
        flat = x.ravel()
        order = np.argsort(flat)
        res = np.empty(flat.size)
        # cumulative sweep: integrate between consecutive sorted points
        prev, acc = self.a, 0.0
        for idx in order:
            xi = flat[idx]
            acc += integrate(self.eps, prev, xi, rtol=1e-12).value
            prev = xi
            res[idx] = acc
        out[...] = res.reshape(x.shape)
        return out

    def log_f(self, x):
        x = _as_array(x)
        return self._log_c(x) + self.eps_integral(x)

    def dlog(self, x):
        x = _as_array(x)
        e = np.exp(-x)
        dlog_c = -self.c1 * e / (1.0 + self.c1 * e)
        return dlog_c + self.eps(x)


_BUILDERS = {
    "constant": _Constant,
    "log_power": _LogPower,
    "loglog_power": _LogLogPower,
    "exp_power": _ExpPower,
    "piecewise_oscillating": _PiecewiseOscillating,
    "karamata": _Karamata,
}


@dataclass(frozen=True)
class TailFunctionSpec:
    """A function ``f`` from one of the declared families.

    ``gamma_index`` and ``divergent_integral`` are derived analytically from
    the family and its parameters; they are never estimated numerically.
    """

    family: str
    params: tuple = field(default=())
    lattice: bool = False

    def __post_init__(self):
        if self.family not in _BUILDERS:
            raise InvalidSpecError(f"unknown family {self.family!r}")
        clean = []
        for name, value in self.params:
            v = float(value)
            if not math.isfinite(v):
                raise InvalidSpecError(f"parameter {name}={value!r} is not finite")
            clean.append((str(name), v))
        object.__setattr__(self, "params", tuple(sorted(clean)))
        try:
            self.impl
        except TypeError as exc:
            raise InvalidSpecError(f"bad parameters for {self.family}: {exc}") from None

    # -- constructors -------------------------------------------------------
    @classmethod
    def make(cls, family, lattice=False, **params):
        return cls(family, tuple(params.items()), lattice)

    @classmethod
    def constant(cls, c=1.0, lattice=False):
        return cls.make("constant", lattice, c=c)

    @classmethod
    def log_power(cls, gamma, c=1.0, lattice=False):
        return cls.make("log_power", lattice, gamma=gamma, c=c)

    @classmethod
    def loglog_power(cls, gamma, c=1.0, lattice=False):
        return cls.make("loglog_power", lattice, gamma=gamma, c=c)

    @classmethod
    def exp_power(cls, C, beta, D=0.0, lattice=False):
        return cls.make("exp_power", lattice, C=C, beta=beta, D=D)

    @classmethod
    def piecewise_oscillating(cls, c=1.0, lattice=False):
        return cls.make("piecewise_oscillating", lattice, c=c)

    @classmethod
    def karamata(cls, c0=1.0, c1=0.0, k=0.0, p=1.0, a=1.0, lattice=False):
        return cls.make("karamata", lattice, c0=c0, c1=c1, k=k, p=p, a=a)

    # -- metadata -----------------------------------------------------------
    @cached_property
    def impl(self):
        return _BUILDERS[self.family](**dict(self.params))

    @property
    def p(self):
        return dict(self.params)

    @property
    def gamma_index(self):
        """Regular-variation index, or ``None`` when f is not regularly varying."""
        return self.impl.gamma_index

    @property
    def regularly_varying(self):
        return self.impl.gamma_index is not None

    @property
    def divergent_integral(self):
        return self.impl.divergent

    # -- vectorized evaluation ---------------------------------------------
    def log_f(self, x):
        return self.impl.log_f(x)

    def f(self, x):
        return np.exp(self.impl.log_f(x))

    def dlog(self, x):
        return self.impl.dlog(x)

    def df(self, x):
        x = _as_array(x)
        return self.f(x) * self.impl.dlog(x)

    def breakpoints(self, a, b):
        return self.impl.breakpoints(a, b)

    def integral(self, x):
        """f^I(x) = int_0^x f, closed form where available."""
        if self.impl.closed_integral:
            return self.impl.integral(x)
        x = _as_array(x)
        out = np.empty(x.shape)
        for idx, xi in np.ndenumerate(x):
            out[idx] = _quad_integral(self, xi)
        return out

    # -- serialization ------------------------------------------------------
    def to_json(self):
        return {"family": self.family, "params": dict(self.params),
                "lattice": self.lattice}

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict) or "family" not in obj:
            raise InvalidSpecError("tail function JSON needs a 'family' key")
        params = obj.get("params", {})
        if not isinstance(params, dict):
            raise InvalidSpecError("'params' must be an object")
        return cls(obj["family"], tuple(params.items()), bool(obj.get("lattice", False)))

    def __repr__(self):
        args = ", ".join(f"{k}={v:g}" for k, v in self.params)
        lat = ", lattice" if self.lattice else ""
        return f"{self.family}({args}{lat})"


def _quad_integral(spec, x):
    if x < 0:
        raise DomainError(f"f_integral needs x >= 0, got {x!r}")
    if x == 0:
        return 0.0
    res = integrate(spec.f, 0.0, x, points=spec.breakpoints(0.0, x), rtol=QUAD_RTOL)
    return res.value


# -- module-level operations -------------------------------------------------

def _check_x(x):
    x = float(x)
    if not x >= 0 or not math.isfinite(x):
        raise DomainError(f"x must be finite and >= 0, got {x!r}")
    return x


def eval_f(spec, x):
    """f(x) for a single point ``x >= 0``."""
    return float(spec.f(_check_x(x)))


def eval_f_prime(spec, x):
    """Closed-form f'(x); raises at breakpoints of the sawtooth family."""
    x = _check_x(x)
    impl = spec.impl
    if isinstance(impl, _PiecewiseOscillating) and impl.is_breakpoint(x):
        fx = float(spec.f(x))
        left = float(fx * impl.left_dlog(x))
        right = float(fx * impl.dlog(x))
        raise OneSidedDerivativeError(x, left, right)
    return float(spec.df(x))


def f_integral(spec, x):
    """f^I(x) = int_0^x f(y) dy."""
    x = _check_x(x)
    return float(spec.integral(x))


def rv_index_estimate(spec, t, x_grid):
    """log(f(xt)/f(x)) / log t along ``x_grid``; tends to the RV index."""
    t = float(t)
    if not t > 1:
        raise DomainError("rv_index_estimate needs t > 1")
    x = _as_array(x_grid)
    if x.size == 0 or np.any(x <= 0):
        raise DomainError("x_grid must be nonempty with positive entries")
    return (spec.log_f(x * t) - spec.log_f(x)) / math.log(t)


def karamata_ratio(spec, x):
    """x f(x) / f^I(x); its limit is gamma + 1 for regularly varying f."""
    if not spec.divergent_integral:
        raise DomainError("karamata_ratio presumes a divergent integral of f")
    x = float(x)
    if not x > 0:
        raise DomainError("karamata_ratio needs x > 0")
    return x * eval_f(spec, x) / f_integral(spec, x)
