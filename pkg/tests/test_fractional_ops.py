import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracsfde.fractional_ops import (SampledFunction, apply_KH, apply_KH_inverse, beta_fn,
                                     c0_constant, frac_derivative, frac_integral, gamma_fn,
                                     kh_constant, kh_kernel, kh_kernel_deriv, kh_kernel_quad,
                                     kh_primitive)
from fracsfde.grid import TimeGrid


def interior_rel(a, b, t, lo=1 / 16):
    m = t >= lo
    return np.max(np.abs(a[m] - b[m]) / np.abs(b[m]))


def test_gamma_and_beta():
    assert gamma_fn(5) == pytest.approx(24)
    assert beta_fn(2, 3) == pytest.approx(1 / 12)
    with pytest.raises(ValueError):
        gamma_fn(0)


def test_sampled_function_shape_checks():
    g = TimeGrid.uniform(1.0, 8)
    with pytest.raises(ValueError):
        SampledFunction(g, np.zeros(5))
    with pytest.raises(ValueError):
        SampledFunction(g, np.full(9, np.nan))
    assert SampledFunction(g, np.r_[np.nan, np.zeros(8)], defined_from=1).interior().size == 8


@pytest.mark.parametrize("alpha", [0.0, -0.2, 1.5])
def test_order_out_of_range(alpha):
    f = SampledFunction.from_callable(lambda x: x, 1.0, 16)
    with pytest.raises(ValueError):
        frac_integral(f, alpha)


def test_integral_of_constant_exact():
    f = SampledFunction.from_callable(np.ones_like, 1.0, 64)
    out = frac_integral(f, 0.3).values
    assert np.allclose(out, f.t**0.3 / gamma_fn(1.3), atol=1e-13)


@pytest.mark.parametrize("alpha,mu", [(0.25, 1.0), (0.5, 0.8), (0.7, 2.0)])
def test_power_law_integral(alpha, mu):
    f = SampledFunction.from_callable(lambda x: x**mu, 1.0, 1024)
    exact = gamma_fn(mu + 1) / gamma_fn(mu + 1 + alpha) * f.t ** (mu + alpha)
    assert interior_rel(frac_integral(f, alpha).values, exact, f.t) < 1e-3


def test_semigroup_error_decreases_with_resolution():
    errs = []
    for n in (256, 1024):
        f = SampledFunction.from_callable(lambda x: x**2, 1.0, n)
        comp = frac_integral(frac_integral(f, 0.4), 0.3).values
        errs.append(interior_rel(comp, frac_integral(f, 0.7).values, f.t))
    assert errs[1] < errs[0]


@given(st.floats(0.05, 0.95), st.floats(0.5, 3.0))
@settings(max_examples=15, deadline=None)
def test_derivative_inverts_integral(alpha, mu):
    f = SampledFunction.from_callable(lambda x: x**mu, 1.0, 512)
    back = frac_derivative(frac_integral(f, alpha), alpha).values
    assert interior_rel(back, f.values, f.t, lo=0.25) < 2e-2


def test_weighted_integral_matches_closed_form():
    # x^{-a} I^a (x^a f) with f = 1
    a = 0.25
    f = SampledFunction.from_callable(np.ones_like, 1.0, 512)
    out = frac_integral(f, a, left_power=a).values
    exact = gamma_fn(1 + a) / gamma_fn(1 + 2 * a) * f.t ** (2 * a)
    assert interior_rel(out, exact, f.t) < 1e-6


def test_c0_constant_positive_and_finite():
    for H in (0.55, 0.75, 0.95):
        c = c0_constant(H)
        assert 0 < c < 10 and math.isfinite(c)


def test_c0_identity():
    # 1 - C0 (H - 1/2) = Gamma(3/2 - H)^2 / Gamma(2 - 2H)
    for H in (0.6, 0.75, 0.9):
        lhs = 1 - c0_constant(H) * (H - 0.5)
        assert lhs == pytest.approx(gamma_fn(1.5 - H) ** 2 / gamma_fn(2 - 2 * H), rel=1e-8)


@pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
def test_kernel_series_matches_quadrature(H):
    for t, s in ((1.0, 0.3), (0.7, 0.69), (2.0, 0.01)):
        assert kh_kernel(H, t, s) == pytest.approx(kh_kernel_quad(H, t, s), rel=1e-8)


def test_kernel_vanishes_above_diagonal_and_primitive_consistent():
    H = 0.7
    assert kh_kernel(H, 0.3, 0.5) == 0
    # d/ds of the primitive is the kernel
    t, s, e = 1.0, 0.4, 1e-6
    num = (kh_primitive(H, t, s + e) - kh_primitive(H, t, s - e)) / (2 * e)
    assert num == pytest.approx(kh_kernel(H, t, s), rel=1e-6)


def test_kernel_derivative_formula():
    H, s, r = 0.75, 0.3, 0.8
    e = 1e-6
    num = (kh_kernel(H, r + e, s) - kh_kernel(H, r - e, s)) / (2 * e)
    assert num == pytest.approx(kh_kernel_deriv(H, r, s), rel=1e-6)
    assert kh_constant(H) > 0


def test_kh_roundtrip_linear_function():
    H = 0.75
    g = TimeGrid.uniform(1.0, 1024)
    f = SampledFunction(g, g.fine_times)
    kf = apply_KH(f, H)
    # derivative of K_H f evaluated exactly: K_H f (t) = int_0^t K_H(t,s) s ds
    back = apply_KH_inverse(kf, SampledFunction(g, np.gradient(kf.values, g.dt)), H)
    assert interior_rel(back.values, f.values, g.fine_times, lo=0.25) < 1e-2


def test_apply_KH_of_constant_is_primitive():
    H = 0.75
    g = TimeGrid.uniform(1.0, 1024)
    out = apply_KH(SampledFunction(g, np.ones(1025)), H).values
    t = g.fine_times
    assert interior_rel(out, kh_primitive(H, t, t), t, lo=0.25) < 5e-3


def test_hurst_validation():
    with pytest.raises(ValueError):
        c0_constant(0.5)
    with pytest.raises(ValueError):
        kh_kernel(1.0, 1.0, 0.5)


def test_order_one_is_plain_integral():
    f = SampledFunction.from_callable(lambda x: x, 1.0, 64)
    assert np.allclose(frac_integral(f, 1.0).values, f.t**2 / 2, atol=1e-12)
