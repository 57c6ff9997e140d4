import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import gamma

from hypopath.fractional_cm import (
    CMFunction,
    RangeError,
    RegularityWarning,
    cm_norm,
    frac_deriv,
    frac_integral,
    k_apply,
    k_inverse,
    linear_l2_sq,
    pairing,
    weighted_linear_integral,
)


def power_integral(beta, alpha, t):
    """I^alpha t^beta in closed form."""
    return gamma(beta + 1) / gamma(beta + alpha + 1) * t ** (beta + alpha)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8, 1.0, 1.6])
def test_integral_exact_on_linear_data(alpha):
    t = np.linspace(0, 2, 257)
    f = 0.3 + 1.7 * t
    ref = 0.3 * power_integral(0, alpha, t) + 1.7 * power_integral(1, alpha, t)
    assert np.max(np.abs(frac_integral(f, alpha, t[1]) - ref)) < 1e-12


def test_integral_of_smooth_data_converges():
    t = np.linspace(0, 1, 2049)
    err = np.max(np.abs(frac_integral(t**2.5, 0.4, t[1]) - power_integral(2.5, 0.4, t)))
    assert err < 1e-6


def test_integral_right_side():
    t = np.linspace(0, 1.5, 301)
    out = frac_integral(np.ones_like(t), 0.6, t[1], side="right")
    assert np.allclose(out, (1.5 - t) ** 0.6 / gamma(1.6), atol=1e-12)


def test_semigroup():
    t = np.linspace(0, 1, 4097)
    f = np.sin(3 * t)
    a = frac_integral(frac_integral(f, 0.3, t[1]), 0.45, t[1])
    b = frac_integral(f, 0.75, t[1])
    assert np.max(np.abs(a - b)) < 1e-4


@pytest.mark.parametrize("alpha", [0.1, 0.35, 0.6, 0.9])
def test_derivative_of_linear_function(alpha):
    t = np.linspace(0, 1, 513)
    d = frac_deriv(2.0 * t, alpha, t[1])
    assert np.max(np.abs(d - 2.0 * t ** (1 - alpha) / gamma(2 - alpha))) < 1e-11


def test_derivative_inverts_integral():
    t = np.linspace(0, 1, 4097)
    f = np.sin(2 * t) + t**2
    for alpha in (0.2, 0.5, 0.8):
        back = frac_deriv(frac_integral(f, alpha, t[1]), alpha, t[1])
        assert np.max(np.abs(back - f)[1:]) < 1e-3


def test_derivative_of_power():
    # D^alpha t^beta = Gamma(beta+1)/Gamma(beta+1-alpha) t^(beta-alpha)
    t = np.linspace(0, 1, 8193)
    d = frac_deriv(t**2, 0.4, t[1])
    ref = gamma(3) / gamma(2.6) * t**1.6
    assert np.max(np.abs(d - ref)) < 1e-5


def test_argument_errors_and_regularity_warning():
    with pytest.raises(RangeError):
        frac_integral(np.ones(5), 0.0, 0.1)
    with pytest.raises(RangeError):
        frac_deriv(np.ones(5), 1.0, 0.1)
    saw = np.tile([0.0, 1.0], 32)
    with pytest.warns(RegularityWarning):
        frac_deriv(saw, 0.5, 1 / 63)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        frac_deriv(np.linspace(0, 1, 64) ** 2, 0.5, 1 / 63)


def test_exact_linear_quadratures():
    t = np.linspace(0, 2, 101)
    R = np.stack([1 + t, 3 * t - 1], axis=1)
    got = weighted_linear_integral(R, t[1], -0.3)
    ref = [quad(lambda s: s**-0.3 * (1 + s), 0, 2)[0], quad(lambda s: s**-0.3 * (3 * s - 1), 0, 2)[0]]
    assert np.allclose(got, ref, rtol=1e-10)
    assert linear_l2_sq(R, t[1]) == pytest.approx(quad(lambda s: (1 + s) ** 2 + (3 * s - 1) ** 2, 0, 2)[0], rel=1e-12)


def test_k_is_integration_at_one_half():
    t = np.linspace(0, 1, 101)
    h = k_apply(np.cos(t), 0.5)
    assert np.allclose(h.values[:, 0], np.sin(t), atol=1e-4)


@pytest.mark.parametrize("H", [0.3, 0.4, 0.6, 0.7, 0.9])
def test_k_on_polynomials(H):
    # K phi = I^o(t^a I^a(s^-a phi)), a = |H - 1/2|, o = 1 or 2H
    a, o = abs(H - 0.5), (1.0 if H > 0.5 else 2 * H)
    t = np.linspace(0, 1, 1025)
    one = gamma(1 - a) * gamma(1 + a) / gamma(1 + a + o) * t ** (a + o)
    lin = gamma(2 - a) * gamma(a + 2) / gamma(a + 2 + o) * t ** (a + 1 + o)
    h = k_apply(np.stack([np.ones_like(t), t], axis=1), H)
    assert np.max(np.abs(h.values[:, 0] - one)) < 1e-10
    assert np.max(np.abs(h.values[:, 1] - lin)) < 1e-4


def test_k_inverse_round_trip():
    t = np.linspace(0, 1, 4097)
    phi = 1.0 + np.sin(3 * t)
    h = k_apply(phi, 0.7)
    back = k_inverse(h)[:, 0]
    # a boundary layer near t = 0 decays with the grid; away from it the match is tight
    assert np.max(np.abs(back - phi)[t > 0.05]) < 1e-3
    assert np.sqrt(np.mean((back - phi) ** 2)) < 2e-2
    with pytest.raises(RangeError):
        k_inverse(CMFunction(1.0, t, 0.4))


def cm_of_constant(H, T, n=4096):
    """h = K 1 in closed form, so that |h|_CM = sqrt(T)."""
    a = H - 0.5
    c = gamma(1 - a) / (1 + a)
    return CMFunction.from_callable(lambda s: c * s ** (1 + a), T, n, H, lambda s: c * (1 + a) * s**a)


@pytest.mark.parametrize("H", [0.6, 0.7, 0.9])
def test_cm_norm_of_k_image(H):
    assert cm_norm(cm_of_constant(H, 1.0)).value == pytest.approx(1.0, rel=1e-3)
    assert cm_norm(cm_of_constant(H, 2.5)).value == pytest.approx(np.sqrt(2.5), rel=1e-3)


def test_cm_norm_at_one_half_and_surrogate():
    h = CMFunction.from_callable(lambda s: np.stack([s, s**2], 1), 1.0, 512, 0.5, lambda s: np.stack([np.ones_like(s), 2 * s], 1))
    assert cm_norm(h).value == pytest.approx(np.sqrt(1 + 4 / 3), rel=1e-12)
    low = CMFunction(1.0, h.values, 0.4, h.deriv)
    nm = cm_norm(low)
    assert nm.mode == "surrogate" and nm.flagged
    with pytest.raises(RangeError):
        cm_norm(low, mode="exact")
    with pytest.raises(ValueError, match="origin"):
        CMFunction(1.0, np.ones(10), 0.7)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.55, 0.95), st.floats(0.2, 5.0), st.floats(-2, 2), st.floats(-2, 2))
def test_cm_scaling_law(H, c, p, q):
    # g(t) = h(c t) on [0, T / c] has |g| = c^H |h|
    T = 1.3
    h = CMFunction.from_callable(lambda s: p * s + q * s**2, T, 512, H, lambda s: p + 2 * q * s)
    g = h.rescaled(T / c)
    lhs, rhs = cm_norm(g).value, c**H * cm_norm(h).value
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 0.95), st.floats(-3, 3))
def test_cm_norm_is_homogeneous(H, c):
    h = cm_of_constant(H, 1.0, 256) if H > 0.5 else CMFunction.from_callable(lambda s: s, 1.0, 256, H)
    scaled = CMFunction(h.T, c * h.values, H, None if h.deriv is None else c * h.deriv)
    assert cm_norm(scaled).value == pytest.approx(abs(c) * cm_norm(h).value, rel=1e-12, abs=1e-14)


def test_pairing():
    h = CMFunction.from_callable(lambda s: s, 2.0, 100, 0.7)
    assert pairing(lambda s: np.ones_like(s), h)[0] == pytest.approx(2.0)
    assert pairing(lambda s: s, h)[0] == pytest.approx(2.0)
    assert pairing(h.grid, h)[0] == pytest.approx(2.0)
