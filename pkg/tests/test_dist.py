import csv
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from semirv.dist import (SemiRVDistribution, class_tag_for, exp_moment_partial, make_distribution,
                         monotone_threshold)
from semirv.errors import InvalidConstructionError, UsageError
from semirv.quad import integrate
from semirv.tailfn import TailFunctionSpec as T

REFERENCE = [
    (1.0, T.constant()), (1.0, T.log_power(1)), (1.0, T.log_power(-1)), (2.0, T.log_power(3)),
    (1.0, T.exp_power(1, 0.5, -1)), (0.25, T.piecewise_oscillating()), (1.0, T.loglog_power(2)),
    (0.5, T.log_power(-2.5)), (1.0, T.karamata(1.0, 0.5, 0.7, 1.0)),
]


@pytest.fixture(scope="module", params=REFERENCE, ids=lambda p: f"{p[1].family}-{p[0]}")
def cont(request):
    return make_distribution(*request.param)


# -- construction --------------------------------------------------------------------

def test_exponential_and_geometric(exp1, geo):
    assert exp1.x0 == 0.0 and exp1.tail(3.0) == pytest.approx(math.exp(-3), rel=1e-15)
    assert geo.tail(5) == pytest.approx(2.0 ** -5, rel=1e-15)
    assert [geo.pmf(k) for k in (1, 2, 4)] == pytest.approx([0.5, 0.25, 0.0625], rel=1e-15)
    assert geo.pmf(0) == 0.0


def test_log_power_head_cutoff_is_zero():
    # e^(-x)(1+x) < 1 for every x > 0, so the head cutoff is the origin
    d = make_distribution(1.0, T.log_power(1))
    assert d.x0 == 0.0 and d.head_atom == 0.0
    assert float(mpmath.exp(-mpmath.mpf("1.14619")) * (1 + mpmath.mpf("1.14619"))) < 1


def test_head_cutoff_solves_unit_level():
    d = make_distribution(1.0, T.exp_power(1, 0.5, -1))
    assert d.x0 == pytest.approx(0.25, abs=1e-12)  # max(head root, (C beta/alpha)^2)
    d2 = make_distribution(1.0, T.constant(5.0))
    assert d2.x0 == pytest.approx(math.log(5.0), rel=1e-13)
    assert d2.tail(d2.x0 - 1e-9) == 1.0


def test_density_golden():
    d = make_distribution(1.0, T.log_power(1))
    assert d.density(5.0) == pytest.approx(5 * math.exp(-5), rel=1e-14)


def test_kind_mismatch(exp1, geo):
    with pytest.raises(UsageError):
        exp1.pmf(3)
    with pytest.raises(UsageError):
        geo.density(1.0)


def test_oscillating_cutoff_depends_on_alpha():
    assert make_distribution(1.0, T.piecewise_oscillating()).x0 == pytest.approx(3.4)
    d = make_distribution(0.25, T.piecewise_oscillating())
    assert d.x0 == pytest.approx(13.6)
    grid = np.linspace(d.x0, 2000, 200001)
    assert np.all(np.diff(d.log_tail(grid)) <= 0)


def test_monotone_threshold_exp_power():
    assert monotone_threshold(2.0, T.exp_power(1, 0.5)) == pytest.approx(1 / 16)


def test_karamata_cutoff_beyond_slow_growth():
    # eps(y) = 3 (1+y)^(-1/2) keeps f'/f above alpha = 0.05 up to y = 3599
    d = make_distribution(0.05, T.karamata(1.0, 0.0, 3.0, 0.5))
    assert d.x0 >= 3599.0
    assert np.all(d.density(np.linspace(d.x0, d.x0 + 5000, 5001)) >= 0)


def test_rejects_when_no_cutoff_is_found():
    # eps(y) = (1+y)^(-0.01) stays above alpha = 0.01 until y ~ 1e200
    with pytest.raises(InvalidConstructionError) as info:
        make_distribution(0.01, T.karamata(1.0, 0.0, 1.0, 0.01))
    assert info.value.x > 0


@pytest.mark.parametrize("f, tag", [(T.log_power(0.5), "L11"), (T.log_power(-1), "L11"),
                                    (T.exp_power(1, 0.5), "L1_not_11"),
                                    (T.piecewise_oscillating(), "L1_not_11"),
                                    (T.log_power(-1.5), "L2")])
def test_class_tags(f, tag):
    assert class_tag_for(1.0, f).name == tag


# -- invariants ------------------------------------------------------------------------

def test_tail_nonincreasing(cont):
    grid = np.linspace(0, cont.x0 + 60 / cont.alpha, 10_000)
    t = cont.tail(grid)
    assert np.all((t >= 0) & (t <= 1)) and np.all(np.diff(t) <= 0)
    assert np.all(cont.tail(grid[grid < cont.x0]) == 1.0)


def test_density_integrates_to_one(cont):
    hi = cont.x0 + 200 / cont.alpha
    pts = list(cont.f.breakpoints(cont.x0, hi))
    body = integrate(lambda y: cont.density(y), cont.x0, hi, points=pts, rtol=1e-12).value
    # remaining mass is exactly tail(hi), below 1e-80 here
    total = cont.head_atom + body + cont.tail(hi)
    assert abs(total - 1) < 1e-9
    assert np.all(cont.density(np.linspace(cont.x0 + 1e-9, hi, 3000)) >= 0)


def test_lattice_pmf_sums_to_one(geo):
    d = make_distribution(1.0, T.log_power(1, lattice=True), "lattice")
    for dist in (geo, d):
        K = int(200 / dist.alpha)
        ks = np.arange(0, K + 1)
        total = math.fsum(dist.pmf(ks))
        assert abs(1 - total) < 2 * math.exp(-dist.alpha * K) * float(dist.f.f(K)) + 1e-15


@pytest.mark.parametrize("u", [0.01, 0.1, 0.5, 0.9, 0.999])
def test_quantile_tail_identity(cont, u):
    x = cont.quantile(u)
    if x > cont.x0:
        assert abs(cont.tail(x) - (1 - u)) < 1e-10
    else:  # u falls inside the head atom
        assert cont.tail(x) <= 1 - u + 1e-10 and u <= cont.head_atom + 1e-12


def test_quantile_golden(exp1, geo):
    assert exp1.quantile(1 - math.exp(-2)) == pytest.approx(2.0, abs=1e-12)
    assert geo.quantile(0.75) == 2
    d = make_distribution(1.0, T.log_power(1))
    want = float(mpmath.findroot(lambda x: mpmath.exp(-x) * (1 + x) - 0.5, 1.7))
    assert d.quantile(0.5) == pytest.approx(want, abs=1e-12)


@given(st.floats(1e-12, 1 - 1e-12))
def test_quantile_monotone_and_inverts(u):
    d = make_distribution(1.0, T.log_power(2))
    x = d.quantile(u)
    assert abs(d.tail(x) - (1 - u)) < 1e-10 * max(1.0, 1 - u) or x == d.x0


def test_sampling_moments(exp1, geo):
    s = exp1.sample(42, 0, 10 ** 6).values
    assert abs(s.mean() - 1) < 4e-3
    g = geo.sample(42, 0, 10 ** 6).values
    assert abs(np.mean(g == 1) - 0.5) < 0.002


def test_sampling_reproducible(cont):
    a = cont.sample(7, 3, 1000).values
    b = cont.sample(7, 3, 1000).values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, cont.sample(7, 4, 1000).values)


@pytest.mark.parametrize("spec", [(1.0, T.log_power(1)), (1.0, T.exp_power(1, 0.5, -1)),
                                  (2.0, T.log_power(-1))])
def test_kolmogorov_smirnov(spec):
    d = make_distribution(*spec)
    s = np.sort(d.sample(11, 0, 10 ** 5).values)
    n = s.size
    cdf = 1 - d.tail(s)
    cdf_left = np.where(s <= d.x0, 0.0, cdf)  # the head atom sits at x0
    right = np.searchsorted(s, s, "right") / n
    left = np.searchsorted(s, s, "left") / n
    ks = max(np.max(np.abs(right - cdf)), np.max(np.abs(left - cdf_left)))
    assert ks < 0.006


def test_sample_csv(tmp_path, exp1):
    batch = exp1.sample(5, 2, 10)
    path = tmp_path / "s.csv"
    batch.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed=5, stream=2" and lines[1] == "value"
    assert np.array_equal(np.array([float(v) for v in lines[2:]]), batch.values)


def test_exp_moment_partial_golden(exp1, geo):
    assert exp_moment_partial(exp1, 10.0) == pytest.approx(10.0, rel=1e-10)
    assert exp_moment_partial(geo, 20) == pytest.approx(20.0, rel=1e-14)
    d = make_distribution(1.0, T.log_power(1))
    v = exp_moment_partial(d, 100.0)
    assert d.f.integral(100.0) / 4 <= v <= 2 * d.f.integral(100.0)


@pytest.mark.parametrize("gamma", [-1, -0.5, 0, 1, 2])
def test_exp_moment_tracks_integral(lp, gamma):
    d = lp(gamma)
    for s in np.linspace(50, 500, 7):
        r = exp_moment_partial(d, s) / float(d.f.integral(s))
        assert 1 / 8 <= r <= 4


def test_json_round_trip(cont):
    back = SemiRVDistribution.from_json(json.loads(json.dumps(cont.to_json())))
    assert back.x0 == cont.x0 and back.class_tag == cont.class_tag
    grid = np.linspace(0, 50, 101)
    assert np.array_equal(back.tail(grid), cont.tail(grid))
