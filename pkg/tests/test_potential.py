import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from duffing_blowup.errors import ConfigError, DomainError
from duffing_blowup.potential import (TWO_SIDED, EquationParams, PotentialModel,
                                      check_growth_bounds, eval_a, eval_G, eval_G1, eval_G2,
                                      eval_G_quadrature, growth_ratios)


@pytest.mark.parametrize("n,m", [(2, 1), (3, 1), (3, 3), (4, 2), (1, 1)])
def test_invalid_exponents_rejected(n, m):
    with pytest.raises(ConfigError):
        EquationParams(n, m)


@pytest.mark.parametrize("n,m", [(3, 2), (4, 3), (5, 3), (5, 4)])
def test_valid_exponents(n, m):
    p = EquationParams(n, m)
    ex = p.exact()
    assert p.alpha == pytest.approx(float(ex["alpha"]))
    assert p.beta == pytest.approx(float(ex["beta"]))
    assert p.gamma == pytest.approx(float(ex["gamma"]))
    assert p.l > 1


def test_default_exponents():
    p = EquationParams()
    assert (p.alpha, p.beta, p.gamma, p.delta) == pytest.approx((0.6, 1.2, 0.6, 0.4))
    assert p.l == pytest.approx(1.1)


def test_non_positive_coefficient_rejected():
    with pytest.raises(ConfigError):
        PotentialModel(cos_coeffs=(1.0, 1.0))
    with pytest.raises(ConfigError):
        PotentialModel(period=0.0)


def test_json_round_trip(model):
    assert PotentialModel.from_json(model.to_json()) == model


def test_a_default(model):
    xs = np.linspace(-3, 3, 101)
    assert np.allclose(eval_a(model, xs), 1.5 + np.cos(2 * np.pi * xs), rtol=0, atol=1e-15)


def test_flat_potential_closed_form(flat_model):
    xs = np.array([0.3, 1.0, 2.5, 17.0])
    assert np.allclose(eval_G(flat_model, xs), xs ** 8 / 8, rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(-25.0, 25.0).filter(lambda v: abs(v) > 1e-3))
def test_G_matches_quadrature(x):
    model = PotentialModel()
    g = eval_G(model, x)
    assert g == pytest.approx(eval_G_quadrature(model, x), rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 40.0))
def test_G_even_and_increasing(x):
    model = PotentialModel()
    assert eval_G(model, -x) == pytest.approx(eval_G(model, x), rel=1e-13)
    assert eval_G(model, 1.001 * x) > eval_G(model, x) > 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 20.0))
def test_derivatives_match_differences(x):
    model = PotentialModel()

    def five_point(f, d=1e-3):
        return (f(x - 2 * d) - 8 * f(x - d) + 8 * f(x + d) - f(x + 2 * d)) / (12 * d)

    assert eval_G1(model, x) == pytest.approx(five_point(lambda v: eval_G(model, v)), rel=1e-6)
    fd2 = five_point(lambda v: eval_G1(model, v))
    assert eval_G2(model, x) == pytest.approx(fd2, rel=1e-7, abs=1e-9 * x ** 7)


def test_growth_bounds(model):
    rep = check_growth_bounds(model)
    for name in TWO_SIDED:
        lo, hi = rep.constants[name]
        assert 0 < lo <= hi < math.inf
    # G / x^8 lies between a_min/8 and a_max/8 up to the oscillation of the lower-order terms
    lo, hi = rep.constants["G/x^(2n+2)"]
    assert 0.5 / 8 * 0.9 < lo and hi < 2.5 / 8 * 1.1


def test_G_tends_to_mean_coefficient(model):
    # the oscillating harmonics contribute O(x^7) to G, so G / x^8 -> c0 / 8
    xs = np.array([200.3, 400.7])
    r = growth_ratios(model, xs)["G/x^(2n+2)"]
    assert np.all(np.abs(r - 1.5 / 8) < 1 / xs)


def test_growth_bounds_domain(model):
    with pytest.raises(DomainError):
        check_growth_bounds(model, (0.5, 10))
