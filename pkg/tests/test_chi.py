import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from psh_lab.chi import FunctionWeight, ReflectedLogWeight, WeightChi, is_admissible_weight
from psh_lab.errors import ParameterError


def test_identity_weight():
    w = WeightChi.identity()
    t = np.linspace(0, 50, 11)
    assert np.allclose(w.h(t), t)
    assert np.allclose(w.chi(-t), -t)


@given(a=st.floats(0.0, 20.0), T0=st.floats(0.1, 5.0))
def test_closed_form_linear_power(a, T0):
    """g' = a/(1+t)^2 on [0, T0], no tail, p = 1: h = t + a (t - log(1+t)) up to T0."""
    w = WeightChi(np.array([0.0, T0]), np.array([a]), 1.0, tail_scale=0.0)
    t = np.linspace(0, T0, 7)
    exact = t + a * (t - np.log1p(t))
    assert np.allclose(w.h(t), exact, rtol=1e-12, atol=1e-12)
    gT = 1.0 + a * (1.0 - 1.0 / (1.0 + T0))
    s = T0 + 3.0
    assert w.h(s) == pytest.approx(T0 + a * (T0 - math.log1p(T0)) + 3.0 * gT, rel=1e-12)


@given(a=st.floats(0.1, 10.0), p=st.floats(1.5, 4.0))
def test_h_against_quadrature(a, p):
    w = WeightChi(np.array([0.0, 1.0, 2.0]), np.array([a, 0.5 * a]), p, kernel="one",
                  tail_kernel="inv-quad", tail_scale=a)
    for t in (0.3, 1.7, 4.0, 40.0):
        ref, _ = quad(lambda s: float(w.hprime(s)), 0.0, t, points=[1.0, 2.0], limit=200, epsabs=1e-13)
        assert w.h(t) == pytest.approx(ref, rel=1e-10)


@given(coeffs=st.lists(st.floats(0.0, 5.0), min_size=1, max_size=4), p=st.floats(1.0, 5.0),
       tail=st.floats(0.0, 5.0))
def test_invariants_hold(coeffs, p, tail):
    knots = np.concatenate([[0.0], np.cumsum(np.full(len(coeffs), 0.5))])
    w = WeightChi(knots, np.array(coeffs), p, tail_scale=tail)
    assert w.check_invariants()["pass"]
    ok, problems = is_admissible_weight(w, -10.0)
    assert ok, problems


def test_weight_validation():
    with pytest.raises(ParameterError):
        WeightChi(np.array([1.0, 2.0]), np.array([1.0]), 1.0)
    with pytest.raises(ParameterError):
        WeightChi(np.array([0.0, 1.0]), np.array([-1.0]), 1.0)
    with pytest.raises(ParameterError):
        WeightChi(np.array([0.0, 1.0]), np.array([1.0]), 0.0)
    with pytest.raises(ParameterError):
        WeightChi(np.array([0.0, 1.0]), np.array([1.0]), 1.0, kernel="nope")
    w = WeightChi.identity()
    with pytest.raises(ParameterError):
        w.h(-1.0)
    with pytest.raises(ParameterError):
        w.chi(1.0)


@given(T0=st.floats(0.05, 0.99), scale=st.floats(0.01, 10.0))
def test_reflected_log_is_admissible(T0, scale):
    w = ReflectedLogWeight(T0, scale)
    assert is_admissible_weight(w, -5 * scale)[0]
    s = -0.5 * T0 * scale
    assert float(w.chi(s)) == pytest.approx(scale * math.log1p(-0.5 * T0), rel=1e-12)
    # C^1 at the junction
    e = -T0 * scale
    assert float(w.chi_prime(e - 1e-9)) == pytest.approx(float(w.chi_prime(e + 1e-9)), rel=1e-6)


def test_convex_weight_is_rejected():
    convex = FunctionWeight(lambda s: -np.log1p(-s), lambda s: 1.0 / (1.0 - s))
    ok, problems = is_admissible_weight(convex, -1.0)
    assert not ok
    assert any("concave" in p for p in problems)
