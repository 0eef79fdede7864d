import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semirv import asym
from semirv.dist import exponential, geometric, make_distribution
from semirv.errors import DomainError, UnsupportedCaseError, WrongCaseError
from semirv.harness import prediction_rows
from semirv.oracle import GridConvolutionPlan, conv_tail_n_grid, log_conv_tail_2
from semirv.tailfn import TailFunctionSpec as T


def ratio(log_a, log_b):
    return math.exp(log_a - log_b)


# -- the constant a ----------------------------------------------------------------------

def test_lattice_mix_constant_golden():
    assert asym.lattice_mix_constant(1.0, 0, 3) == 1.0
    assert asym.lattice_mix_constant(math.log(2), 2, 2) == pytest.approx(1.0, rel=1e-15)
    assert asym.lattice_mix_constant(1.0, 1, 3) == pytest.approx(1.31083, rel=1e-5)


@given(alpha=st.floats(0.05, 5.0), n=st.integers(2, 6), data=st.data())
def test_lattice_mix_constant_power_identity(alpha, n, data):
    m = data.draw(st.integers(0, n - 1))
    a = asym.lattice_mix_constant(alpha, m, n)
    want = math.expm1(alpha) ** m * alpha ** (n - m - 1)
    assert a ** (n - 1) == pytest.approx(want, rel=1e-12)


def test_all_lattice_constant_is_not_the_mixed_power():
    # with m = n the constant is e^alpha - 1, so a^(n-1) = (e^alpha - 1)^(n-1), not ^n
    a = asym.lattice_mix_constant(1.0, 3, 3)
    assert a == pytest.approx(math.e - 1)
    assert a ** 2 != pytest.approx((math.e - 1) ** 3)


def test_lattice_mix_constant_domain():
    with pytest.raises(DomainError):
        asym.lattice_mix_constant(1.0, 4, 3)
    with pytest.raises(DomainError):
        asym.lattice_mix_constant(0.0, 0, 2)


# -- general form ---------------------------------------------------------------------------

def test_thm11_golden(exp1, geo, lp):
    assert asym.predict_thm11([exp1, exp1], 10.0) == pytest.approx(10 * math.exp(-10), rel=1e-9)
    assert asym.predict_thm11([geo, geo], 10) == pytest.approx(10 * 2.0 ** -10, rel=1e-9)
    assert asym.predict_thm11([exp1, lp(1)], 10.0) == pytest.approx(60 * math.exp(-10), rel=1e-9)


def test_thm11_rejects(exp1, lp):
    with pytest.raises(UnsupportedCaseError):
        asym.predict_thm11([exp1, exponential(2.0)], 10.0)
    with pytest.raises(UnsupportedCaseError):
        asym.predict_thm11([exp1, lp(-2)], 10.0)


def test_thm11_mixed_lattice_at_integers(exp1):
    # one lattice law among two, a = e^alpha - 1; compare at integers and half-integers
    from semirv.oracle import conv_tail_2
    geo = geometric(1.0)
    for k in (40, 80, 160):
        for off in (0.0, 0.5):
            x = k + off
            r = conv_tail_2(geo, exp1, x) / asym.predict_thm11([geo, exp1], x)
            assert abs(r - 1) < 3.0 / k


# -- closed forms -----------------------------------------------------------------------------

def test_case_i_golden(exp1, lp):
    for x in (5.0, 50.0):
        assert asym.predict_thm12_case_i([exp1, exp1], x) == pytest.approx(x * math.exp(-x))
    assert asym.predict_thm12_case_i([exp1] * 3, 20.0) == pytest.approx(200 * math.exp(-20))
    x = 30.0
    assert asym.predict_thm12_case_i([lp(1), lp(1)], x) == pytest.approx(
        x * (1 + x) ** 2 * math.exp(-x) / 6, rel=1e-13)


def test_case_i_wrong_case(lp):
    with pytest.raises(WrongCaseError):
        asym.predict_thm12_case_i([lp(-1), lp(0)], 10.0)
    with pytest.raises(WrongCaseError):
        asym.predict_thm12_case_i([make_distribution(1.0, T.exp_power(1, 0.5))] * 2, 10.0)


def test_case_ii_golden(lp):
    d = lp(-1)
    x = 25.0
    want = 2 * math.exp(-x) * math.log1p(x) / (1 + x)
    assert asym.predict_thm12_case_ii([d, d], x) == pytest.approx(want, rel=1e-13)
    assert asym.predict_identical_case_ii(d, 2, x) == pytest.approx(want, rel=1e-13)
    assert asym.predict_identical_case_ii(d, 4, x) == pytest.approx(
        asym.predict_thm12_case_ii([d] * 4, x), rel=1e-13)
    with pytest.raises(WrongCaseError):
        asym.predict_thm12_case_ii([d, lp(0)], x)


def test_case_ii_against_general_form(lp):
    d = lp(-1)
    x = 1e6
    assert abs(ratio(asym.log_predict_thm11([d, d], x),
                     asym.log_predict_thm12_case_ii([d, d], x)) - 1) < 0.05


def test_case_iii_golden(lp):
    x = 40.0
    got = asym.predict_thm12_case_iii([lp(-1), lp(0)], x)
    assert got == pytest.approx(math.exp(-x) * math.log1p(x), rel=1e-13)
    # order of the members does not matter
    assert asym.predict_thm12_case_iii([lp(0), lp(-1)], x) == got


def test_case_iii_three_members_against_general_form(lp):
    ds = [lp(-1), lp(0), lp(1)]
    x = 1e3
    r = ratio(asym.log_predict_thm11(ds, x), asym.log_predict_thm12_case_iii(ds, x))
    assert abs(r - 1) < 0.25
    r2 = ratio(asym.log_predict_thm11(ds, 1e5), asym.log_predict_thm12_case_iii(ds, 1e5))
    assert abs(r2 - 1) < abs(r - 1)


@given(st.lists(st.sampled_from([-0.5, 0.0, 0.5, 1.0, 2.0]), min_size=2, max_size=5),
       st.floats(2.0, 1e4))
def test_case_collapse_no_reciprocal_members(gammas, x):
    ds = [make_distribution(1.0, T.log_power(g)) for g in gammas]
    a = asym.log_predict_thm12_case_iii(ds, x)
    b = asym.log_predict_thm12_case_i(ds, x)
    assert abs(math.expm1(a - b)) < 1e-12


@pytest.mark.parametrize("g", [0.0, 0.5, 2.0])
def test_case_collapse_one_member_above(lp, g):
    for x in (10.0, 100.0, 1e4):
        c = asym.log_predict_thm12_case_iii([lp(-1), lp(g)], x)
        pair = -x + asym.log_predict_lemma22(lp(-1).f, lp(g).f, x)
        assert abs(math.expm1(c - pair)) < 1e-10


def test_case_iii_rejects_all_reciprocal(lp):
    with pytest.raises(WrongCaseError):
        asym.predict_thm12_case_iii([lp(-1)] * 2, 10.0)


@pytest.mark.parametrize("gammas", [(0, 0), (1, 1), (0.5, 2), (0, 0, 0)])
def test_general_and_closed_forms_agree(gammas):
    ds = [make_distribution(1.0, T.log_power(g)) for g in gammas]
    x = 1e3
    r = ratio(asym.log_predict_thm11(ds, x), asym.log_predict_thm12_case_i(ds, x))
    assert abs(r - 1) < 0.02


@pytest.mark.parametrize("gammas", [(-0.5, 0), (-0.5, -0.5), (-0.9, 0)])
def test_general_and_closed_forms_negative_index(gammas):
    # the kernel approximation converges slowly when an index is below zero
    ds = [make_distribution(1.0, T.log_power(g)) for g in gammas]
    devs = [abs(ratio(asym.log_predict_thm11(ds, x), asym.log_predict_thm12_case_i(ds, x)) - 1)
            for x in (1e3, 1e4, 1e5, 1e6)]
    assert np.all(np.diff(devs) < 0)


# -- pairwise forms and integral product --------------------------------------------------------

def test_lemma22_golden():
    assert asym.predict_lemma22(T.constant(), T.constant(), 7.0) == pytest.approx(7.0)
    x = 1e4
    f = T.log_power(-1)
    assert asym.predict_lemma22(f, f, x) == pytest.approx(2 * math.log1p(x) / (1 + x))
    assert asym.predict_lemma22(f, T.log_power(2), 1e3) == pytest.approx(
        (1 + 1e3) ** 2 * math.log1p(1e3))
    assert asym._lemma22_case(T.log_power(2), f) == asym.LEMMA22_III
    with pytest.raises(WrongCaseError):
        asym.predict_lemma22(T.log_power(-2), f, 10.0)
    with pytest.raises(WrongCaseError):
        asym.predict_lemma22(T.exp_power(1, 0.5), f, 10.0)


def test_integral_product_single_is_exact():
    lhs, rhs = asym.gnI_product_check([T.log_power(-1)], 123.0)
    assert lhs == rhs


def test_integral_product_pair():
    lhs, rhs = asym.gnI_product_check([T.log_power(-1)] * 2, 1e5)
    assert 0.9 <= lhs / rhs <= 1.1


def test_integral_product_triple_trend():
    l2, r2 = asym.gnI_product_check([T.log_power(-1)] * 3, 1e2)
    l4, r4 = asym.gnI_product_check([T.log_power(-1)] * 3, 1e4)
    assert abs(l4 / r4 - 1) < abs(l2 / r2 - 1)


def test_integral_product_by_convolution_identity():
    # int_0^x (f1 (x) f2) = (f1^I (x) f2)(x): integrate the tabulated fold against it
    from semirv.quad import integrate
    f = T.log_power(-1)
    x = 500.0
    want = integrate(lambda y: np.log1p(x - y) / (1 + y), 0, x, rtol=1e-12).value
    lhs, _ = asym.gnI_product_check([f, f], x)
    assert lhs == pytest.approx(want, rel=1e-6)


def test_integral_product_requires_reciprocal():
    with pytest.raises(WrongCaseError):
        asym.gnI_product_check([T.log_power(0), T.log_power(-1)], 10.0)


# -- exp-power and oscillating members ---------------------------------------------------------

def test_prop41_small_C_limit():
    x = 50.0
    got = asym.predict_prop41(1.0, 1e-9, -1.0, 0.5, 2, x)
    assert got == pytest.approx(x * math.exp(-x - 2), rel=1e-8)


@given(st.integers(0, 2 ** 30).map(lambda k: k / 2 ** 30), st.floats(1.0, 1e4))
def test_prop41_integrand_symmetric(t, x):
    # dyadic t keeps 1 - t exact
    a = asym.prop41_log_integrand(t, 1.0, 0.5, x)
    b = asym.prop41_log_integrand(1.0 - t, 1.0, 0.5, x)
    assert abs(math.expm1(b - a)) < 1e-14 or abs(b - a) < 1e-14


def test_prop41_against_oracle():
    d = make_distribution(1.0, T.exp_power(1, 0.5, -1))
    dev = {}
    for x in (100.0, 400.0):
        dev[x] = abs(ratio(log_conv_tail_2(d, d, x), asym.log_predict_prop41(1, 1, -1, 0.5, 2, x)) - 1)
    assert dev[400.0] < 0.1 and dev[400.0] < dev[100.0]


def test_prop41_general_fold_matches_two_fold_form():
    x = 200.0
    a = asym.log_predict_prop41(1, 1, -1, 0.5, 2, x)
    d = make_distribution(1.0, T.exp_power(1, 0.5, -1))
    assert abs(math.expm1(a - asym.log_predict_thm11([d, d], x))) < 1e-8
    assert math.isfinite(asym.log_predict_prop41(1, 1, -1, 0.5, 3, x))


def test_envelope_degenerate_and_width(lp):
    d = lp(1)
    lo, hi = asym.envelope_prop42([(d, T.log_power(1), 1, 1)] * 2, 30.0)
    assert lo == hi == pytest.approx(asym.predict_thm12_case_i([d, d], 30.0), rel=1e-14)
    saw = make_distribution(1.0, T.piecewise_oscillating())
    lo, hi = asym.envelope_prop42([(saw, T.log_power(1), 1, 2)] * 2, 300.0)
    assert hi / lo == pytest.approx(4.0, rel=1e-14)
    with pytest.raises(DomainError):
        asym.envelope_prop42([(saw, T.log_power(1), 2, 1)] * 2, 300.0)


def test_envelope_contains_oracle():
    saw = make_distribution(0.25, T.piecewise_oscillating())
    x = 3.0 * 4 ** 6
    g = conv_tail_n_grid([saw, saw], GridConvolutionPlan(1 / 16, x + 2 * saw.x0 + 1), [x])
    lo, hi = asym.log_envelope_prop42([(saw, T.log_power(1), 1, 2)] * 2, x)
    assert lo <= g.log_lower[0] and g.log_upper[0] <= hi


# -- dispatcher --------------------------------------------------------------------------------

def test_classify(exp1, lp):
    assert asym.classify_and_predict([exp1, exp1]).case_tag == asym.THM12_I
    assert asym.classify_and_predict([lp(-1)] * 2).case_tag == asym.THM12_II
    assert asym.classify_and_predict([lp(-1), exp1]).case_tag == asym.THM12_III
    ep = make_distribution(1.0, T.exp_power(1, 0.5, -1))
    p = asym.classify_and_predict([ep, ep])
    assert p.case_tag == asym.THM11 and p.a_constant == 1.0
    assert p(100.0) == pytest.approx(asym.predict_thm11([ep, ep], 100.0))
    with pytest.raises(UnsupportedCaseError, match="int_0"):
        asym.classify_and_predict([exp1, lp(-3)])
    with pytest.raises(UnsupportedCaseError):
        asym.classify_and_predict([exp1, exponential(2.0)])


def test_classify_lattice_constant(geo):
    p = asym.classify_and_predict([geo, geo])
    assert p.a_constant == pytest.approx(1.0)


# -- convergence and shape ----------------------------------------------------------------------

REFERENCE = {
    "case_i": ([exponential()] * 2, asym.log_predict_thm12_case_i),
    "case_i_powers": ([make_distribution(1.0, T.log_power(g)) for g in (1, 0.5)],
                      asym.log_predict_thm12_case_i),
    "case_ii": ([make_distribution(1.0, T.log_power(-1))] * 2, asym.log_predict_thm12_case_ii),
    "case_iii": ([make_distribution(1.0, T.log_power(g)) for g in (-1, 0)],
                 asym.log_predict_thm12_case_iii),
    "case_i_alpha2": ([make_distribution(2.0, T.log_power(1))] * 2, asym.log_predict_thm12_case_i),
}


@pytest.mark.parametrize("name", list(REFERENCE))
def test_ratios_approach_one(name):
    ds, pred = REFERENCE[name]
    alpha = ds[0].alpha
    for x1 in (20 / alpha, 40 / alpha):
        d1 = abs(ratio(log_conv_tail_2(*ds, x1), pred(ds, x1)) - 1)
        d2 = abs(ratio(log_conv_tail_2(*ds, 2 * x1), pred(ds, 2 * x1)) - 1)
        assert d2 < d1


PREDICTORS = [
    lambda x: asym.log_predict_thm11([exponential(), make_distribution(1.0, T.log_power(1))], x),
    lambda x: REFERENCE["case_i_powers"][1](REFERENCE["case_i_powers"][0], x),
    lambda x: REFERENCE["case_ii"][1](REFERENCE["case_ii"][0], x),
    lambda x: REFERENCE["case_iii"][1](REFERENCE["case_iii"][0], x),
    lambda x: asym.log_predict_prop41(1, 1, -1, 0.5, 2, x),
    lambda x: asym.log_envelope_prop42(
        [(make_distribution(0.25, T.piecewise_oscillating()), T.log_power(1), 1, 2)] * 2, x)[1],
]


@pytest.mark.parametrize("idx", range(len(PREDICTORS)))
def test_predictors_positive_and_decreasing(idx):
    xs = np.geomspace(50, 5e4, 12)
    vals = [PREDICTORS[idx](x) for x in xs]
    assert all(math.isfinite(v) for v in vals)  # log values: the predictions are positive
    assert np.all(np.diff(vals) < 0)


def test_prediction_csv(exp1):
    text = prediction_rows(asym.classify_and_predict([exp1, exp1]), [1.0, 2.0])
    lines = text.splitlines()
    assert lines[0] == "x,predicted,case_tag,a_constant"
    x, v, tag, a = lines[2].split(",")
    assert float(x) == 2.0 and float(v) == pytest.approx(2 * math.exp(-2), rel=1e-14)
    assert tag == asym.THM12_I and float(a) == 1.0
