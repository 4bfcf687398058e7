"""Closed forms against exhaustive enumeration and independent special-function identities."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from echoed_walks import analytic
from echoed_walks.errors import EqualParameters, HypothesisViolation, MomentConditionError, OutOfMomentDomain
from echoed_walks.laws import Bernoulli, Constant, Discrete, WalkParams

from oracles import enumerate_walk


F = Fraction


CASES = [
    (0.5, [(F(2), F(1))], [(F(1), F(1))]),
    (0.8, [(F(0), F(1, 2)), (F(1), F(1, 2))], [(F(1), F(1))]),
    (1.0, [(F(1), F(1, 2)), (F(3), F(1, 2))], [(F(1), F(1))]),
    (0.25, [(F(1, 2), F(1, 4)), (F(2), F(3, 4))], [(F(-1), F(1, 3)), (F(2), F(2, 3))]),
]


def _params(p, echo, spin):
    e = Discrete(tuple(float(v) for v, _ in echo), tuple(float(w) for _, w in echo))
    s = Discrete(tuple(float(v) for v, _ in spin), tuple(float(w) for _, w in spin))
    return WalkParams(p, e, s)


@pytest.mark.parametrize("p,echo,spin", CASES)
@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_expected_position_matches_enumeration(p, echo, spin, n):
    hist = enumerate_walk(p, echo, spin, n)
    exact = sum(w * sum(inc) for inc, w in hist)
    assert analytic.expected_position(_params(p, echo, spin), n) == pytest.approx(float(exact), rel=1e-12)


@pytest.mark.parametrize("p,echo,spin", CASES[:3])
@pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
def test_expected_moment_sum_matches_enumeration(p, echo, spin, q):
    n = 4
    hist = enumerate_walk(p, echo, spin, n)
    exact = sum(w * sum(abs(x) ** int(q) for x in inc) for inc, w in hist)
    assert analytic.expected_moment_sum(_params(p, echo, spin), q, n) == pytest.approx(float(exact), rel=1e-12)


def test_critical_branch_matches_recursion():
    # pm = 1 exactly: E S_n = n (p + (1-p) H_n) EX
    params = WalkParams(0.5, Constant(2.0))
    total = 1.0
    for k in range(1, 300):
        a = 0.5 + 0.5 * 2.0 * total / k
        total += a
    assert analytic.expected_position(params, 300) == pytest.approx(total, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.1, 4.0), st.integers(1, 400))
def test_expected_position_recursion_property(p, c, n):
    params = WalkParams(p, Constant(c))
    total = 1.0
    for k in range(1, n):
        total += (1 - p) + p * c * total / k
    # the closed form divides by 1 - pm, so rounding grows like 1/|1 - pm| near criticality
    rel = 1e-9 if abs(p * c - 1) > 1e-3 else 1e-6
    assert analytic.expected_position(params, n) == pytest.approx(total, rel=rel)


@pytest.mark.parametrize(
    "p,m1,expo,const",
    [
        (0.8, 2.0, 1.6, 1 / math.gamma(2.6) * (1 + 0.2 / 0.6)),
        (0.5, 1.0, 1.0, 1.0),  # subcritical: (1-p)/(1-pm) = 1
        (1.0, 2.0, 2.0, 0.5),
    ],
)
def test_mean_asymptotics_constants(p, m1, expo, const):
    e, c, _ = analytic.mean_asymptotics(p, m1, 1.0)
    assert e == pytest.approx(expo) and c == pytest.approx(const, rel=1e-12)


def test_asymptotic_constant_is_limit_of_exact_mean():
    params = WalkParams(0.8, Constant(2.0))
    _, c, _ = analytic.asymptotic_mean_constant(params)
    n = 10**7
    assert analytic.expected_position(params, n) / n**1.6 == pytest.approx(c, rel=1e-3)
    assert c == pytest.approx(0.9327, abs=1e-4)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 30), st.floats(-0.9, 3.0), st.floats(-0.9, 3.0))
def test_gamma_sum_telescoping_property(m, extra, a, b):
    n = m + extra
    if abs(a - b) < 1e-3:
        return
    brute = math.fsum(math.exp(math.lgamma(i + a) - math.lgamma(i + 1 + b)) for i in range(m, n + 1))
    assert analytic.gamma_sum(m, n, a, b) == pytest.approx(brute, rel=1e-9)


def test_gamma_sum_equal_parameters():
    with pytest.raises(EqualParameters):
        analytic.gamma_sum(1, 5, 0.5, 0.5)


def test_log_ratio_large_n():
    n = 1e8
    assert analytic.log_ratio(n, 1.6, 0.0) == pytest.approx(1.6 * math.log(n), rel=1e-8)
    assert np.isfinite(analytic.ratio(np.array([1e12]), 0.3, 0.0)).all()


def test_harmonic_exact_and_crossover():
    assert analytic.harmonic(1) == 1.0
    assert analytic.harmonic(4) == pytest.approx(25 / 12)
    n = 10_000
    digamma_form = float(special.digamma(n + 1) + np.euler_gamma)
    assert analytic.harmonic(n) == pytest.approx(digamma_form, rel=1e-14)
    assert analytic.harmonic(n + 1) - analytic.harmonic(n) == pytest.approx(1 / (n + 1), rel=1e-8)


def test_log_martingale_scale():
    assert analytic.log_martingale_scale(5, 1.0) == pytest.approx(-math.log(5))


def test_l_moments_bernoulli_half():
    m = analytic.l_moments(Bernoulli(0.5), 2)
    assert m[0] == pytest.approx(1 / math.gamma(1.5), rel=1e-12)
    assert m[1] == pytest.approx(2.0, rel=1e-12)


def test_l_moments_identity_echo_is_degenerate_one():
    assert analytic.l_moments(Constant(1.0), 5) == pytest.approx([1.0] * 5)


def test_l_moments_constant_two_has_no_second_moment():
    # m_2 = 4 = 2 m_1: the second moment is infinite
    with pytest.raises(MomentConditionError) as info:
        analytic.l_moments(Constant(2.0), 3)
    assert info.value.largest_valid_k == 1


def test_l_moments_degenerate():
    assert analytic.l_moments(Constant(3.0), 1) == [0.0]
    with pytest.raises(MomentConditionError):
        analytic.l_moments(Constant(3.0), 2)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_mittag_leffler_half_is_scaled_half_normal(k):
    # index 1/2: M has the law of sqrt(2)|Z|
    ref = 2.0**k * math.gamma((k + 1) / 2) / math.sqrt(math.pi)
    assert analytic.ml_moment(0.5, k) == pytest.approx(ref, rel=1e-12)


def test_ml_moment_domain():
    assert analytic.ml_moment(1.0, 3.0) == pytest.approx(1.0)
    with pytest.raises(OutOfMomentDomain):
        analytic.ml_moment(0.0, 1.0)
    with pytest.raises(OutOfMomentDomain):
        analytic.ml_moment(0.5, -1.0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_atom_factorisation(k):
    lhs, rhs = analytic.atom_factorization_check(Bernoulli(0.5), k)
    assert lhs == pytest.approx(rhs, rel=1e-10)
    lhs, rhs = analytic.atom_factorization_check(Discrete((0.0, 1.0, 2.0), (0.3, 0.5, 0.2)), k)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_limit_mean_forms():
    params = WalkParams(0.8, Constant(2.0))
    assert analytic.limit_mean(params, "M").value == pytest.approx(0.93264579, rel=1e-6)
    assert analytic.limit_mean(WalkParams(1.0, Constant(3.0)), "L").degenerate
    assert analytic.limit_mean(params, "component", 1).value == pytest.approx(1 / math.gamma(2.6))
    with pytest.raises(HypothesisViolation):
        analytic.limit_mean(WalkParams(0.5, Constant(1.0)), "M")
