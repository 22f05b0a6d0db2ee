import math

import mpmath
import numpy as np
import pytest
from scipy.integrate import quad
from hypothesis import given, settings
from hypothesis import strategies as st

from steinpair import couplings as C
from steinpair import models as M
from steinpair import stein_normal as SN
from steinpair.numerics import QuadratureSpec

mpmath.mp.dps = 30


def mp_solution(z, t, x):
    """f(x) = e^{x^2/2} int_{-inf}^x (h_t(y) - E h_t) e^{-y^2/2} dy at 30 digits."""
    z, t, x = mpmath.mpf(z), mpmath.mpf(t), mpmath.mpf(x)
    eh = mpmath.ncdf(z / mpmath.sqrt(1 + t * t))
    g = lambda y: (mpmath.ncdf((z - y) / t) - eh) * mpmath.exp((x * x - y * y) / 2)
    if x <= 0:
        return float(mpmath.quad(g, [-mpmath.inf, x]))
    return float(-mpmath.quad(g, [x, mpmath.inf]))


@pytest.mark.parametrize("z,t", [(0.0, 0.25), (-1.0, 0.5), (1.0, 1.0), (0.5, 0.1)])
@pytest.mark.parametrize("x", [-6.0, -2.0, -0.3, 0.0, 0.4, 1.7, 5.0])
def test_solution_against_mpmath(z, t, x):
    test = SN.SmoothedHalfLineTest(z, t)
    assert SN.stein_solution(test, x) == pytest.approx(mp_solution(z, t, x), abs=1e-12)


@pytest.mark.parametrize("z,t", [(-1.0, 0.25), (0.0, 0.5), (1.0, 1.0)])
def test_expected_h_by_integration(z, t):
    test = SN.SmoothedHalfLineTest(z, t)
    oracle = mpmath.quad(lambda x: mpmath.npdf(x) * mpmath.ncdf((z - x) / t), [-mpmath.inf, z, mpmath.inf])
    assert SN.expected_h_t(test) == pytest.approx(float(oracle), abs=1e-14)


def test_h_t_prime_finite_difference():
    test = SN.SmoothedHalfLineTest(0.3, 0.5)
    x = np.linspace(-3, 3, 31)
    h = 1e-5
    fd = (SN.h_t_eval(test, x + h) - SN.h_t_eval(test, x - h)) / (2 * h)
    assert np.max(np.abs(fd - SN.h_t_prime(test, x))) < 1e-9


@pytest.mark.parametrize("z,t", [(-1.0, 0.25), (0.0, 0.5), (1.0, 1.0)])
def test_derivatives_by_finite_differences(z, t):
    test = SN.SmoothedHalfLineTest(z, t)
    x = np.linspace(-5, 5, 41)
    h = 1e-4
    f1, f2 = SN.stein_derivs(test, x)
    d1 = (SN.stein_solution(test, x + h) - SN.stein_solution(test, x - h)) / (2 * h)
    p1, _ = SN.stein_derivs(test, x + h)
    m1, _ = SN.stein_derivs(test, x - h)
    assert np.max(np.abs(d1 - f1)) < 1e-7
    assert np.max(np.abs((p1 - m1) / (2 * h) - f2)) < 1e-6


@pytest.mark.parametrize("w", [-3.0, -0.5, 0.75, 2.5])
def test_G_is_antiderivative(w):
    test = SN.SmoothedHalfLineTest(0.0, 0.5)
    h = 1e-4
    slope = (SN.G_eval(test, w + h) - SN.G_eval(test, w - h)) / (2 * h)
    assert slope == pytest.approx(SN.stein_solution(test, w), abs=1e-8)
    assert SN.G_eval(test, 0.0) == 0.0


def test_G_against_mpmath():
    z, t, w = 0.5, 0.5, 1.3
    oracle, _ = quad(lambda x: mp_solution(z, t, x), 0.0, w, epsabs=1e-13)
    assert SN.G_eval(SN.SmoothedHalfLineTest(z, t), w) == pytest.approx(oracle, abs=1e-10)


@pytest.mark.parametrize("z", [-1.0, 0.0, 1.0])
def test_tail_asymptote(z):
    # f decays like 1/|x|: x f(x) tends to E h_t at +inf and to -(1 - E h_t) at -inf
    test = SN.SmoothedHalfLineTest(z, 0.25)
    eh = SN.expected_h_t(test)
    x = 40.0
    assert x * SN.stein_solution(test, x) == pytest.approx(eh, abs=1e-3)
    assert -x * SN.stein_solution(test, -x) == pytest.approx(-(1 - eh), abs=1e-3)
    assert abs(SN.stein_solution(test, 8.0)) > 1e-3


@pytest.mark.parametrize("z", [-1.0, 0.0, 1.0])
@pytest.mark.parametrize("t", [0.1, 0.25, 0.5, 1.0])
def test_certificates(z, t):
    cert = SN.certify_solution(SN.SmoothedHalfLineTest(z, t))
    assert cert.passed, cert


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(0.05, 2.0))
def test_certificate_random_tests(z, t):
    grid = np.linspace(-6, 6, 121)
    cert = SN.certify_solution(SN.SmoothedHalfLineTest(z, t), grid=grid)
    assert cert.passed, cert


def test_smoothing_radius_validation():
    with pytest.raises(ValueError):
        SN.SmoothedHalfLineTest(0.0, 0.0)
    with pytest.raises(ValueError):
        SN.SmoothedHalfLineTest(0.0, 1.0, a=1.0)


def test_ef_variant_validation():
    c, _ = M.rademacher_sum(4)
    with pytest.raises(ValueError):
        SN.ef_zero_check(c, SN.SmoothedHalfLineTest(0.0, 1.0), "nope")


ZS = (-1.0, 0.0, 1.0)
TS = (0.25, 0.5, 1.0)


def test_identity_on_zoo(normal_zoo):
    for label, c, meta in normal_zoo:
        d = C.regression_decompose(c, meta.structural_lambda)
        for z in ZS:
            for t in TS:
                rep = SN.identity_2_11_check(c, d, SN.SmoothedHalfLineTest(z, t))
                assert abs(rep.residual) < 1e-10, (label, z, t)
                assert abs(rep.decomposition_residual) < 1e-10, (label, z, t)
                assert rep.J_bounds_hold, (label, z, t, rep)


def test_identity_with_nondefault_lambda():
    # the identity holds for any lambda; alpha and R absorb the change
    c, _ = M.biased_cycle_normal(12, 0.2)
    c = C.standardize(c)
    lam_star = C.regression_decompose(c).lam
    d = C.regression_decompose(c, 0.7 * lam_star)
    assert abs(d.alpha) > 1e-3
    rep = SN.identity_2_11_check(c, d, SN.SmoothedHalfLineTest(0.5, 0.5))
    assert abs(rep.residual) < 1e-10
    assert abs(rep.decomposition_residual) < 1e-10


def test_tau_rule_convergence():
    c, _ = M.biased_cycle_normal(8, 0.2)
    c = C.standardize(c)
    test = SN.SmoothedHalfLineTest(1.0, 0.25)
    coarse = SN.remainder_split_term(c, test, QuadratureSpec(32))
    fine = SN.remainder_split_term(c, test, QuadratureSpec(32, panels=4))
    assert coarse == pytest.approx(fine, rel=1e-10)


def test_remainder_split_dichotomy(normal_zoo):
    tests = [SN.SmoothedHalfLineTest(z, t) for z in ZS for t in TS]
    for label, c, meta in normal_zoo:
        split = max(abs(SN.remainder_split_term(c, s)) for s in tests)
        if C.is_exchangeable(c):
            assert split < 1e-12, label
        else:
            assert split > 1e-6, label


def test_ef_dichotomy(normal_zoo):
    tests = [SN.SmoothedHalfLineTest(z, t) for z in ZS for t in TS]
    for label, c, meta in normal_zoo:
        integral = max(abs(SN.ef_zero_check(c, s, "integral_form")) for s in tests)
        product = max(abs(SN.ef_zero_check(c, s, "product_form")) for s in tests)
        assert integral < 1e-12, label
        if C.is_exchangeable(c):
            assert product < 1e-12, label
        else:
            assert product > 1e-6, label
