"""Log-Gamma and Beta functions.

Lanczos approximation (g=7, 9 terms) below 10, Stirling's series with six
Bernoulli corrections above, upward recursion for arguments below 1/2.
"""
import math

from .errors import DomainError

_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
# B_{2k} / (2k (2k-1)) for k = 1..7
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _lanczos(x):
    # valid for x >= 1/2
    z = x - 1.0
    acc = _LANCZOS[0]
    for i, c in enumerate(_LANCZOS[1:], start=1):
        acc += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def _stirling(x):
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    power = inv
    for c in _STIRLING:
        series += c * power
        power *= inv2
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI + series


def ln_gamma(x):
    """Natural log of the Gamma function for ``x > 0``."""
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise DomainError(f"ln_gamma needs a finite positive argument, got {x!r}")
    shift = 0.0
    while x < 0.5:
        shift -= math.log(x)
        x += 1.0
    if x >= 10.0:
        return shift + _stirling(x)
    return shift + _lanczos(x)


def beta(a, b):
    """Euler Beta function ``B(a, b) = Gamma(a)Gamma(b)/Gamma(a+b)``."""
    a, b = float(a), float(b)
    if not (a > 0 and b > 0):
        raise DomainError(f"beta needs positive arguments, got ({a!r}, {b!r})")
    return math.exp(ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))


def ln_beta(a, b):
    a, b = float(a), float(b)
    if not (a > 0 and b > 0):
        raise DomainError(f"beta needs positive arguments, got ({a!r}, {b!r})")
    return ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
