import math

import numpy as np
import pytest
from scipy import integrate

from fracsfde.fbm_paths import fbm_from_wiener, sample_wiener
from fracsfde.fractional_ops import SampledFunction, c0_constant, gamma_fn, kh_constant, kh_kernel
from fracsfde.girsanov import (DriftDiscrepancy, WeightOverflow, compute_h, girsanov_weight,
                               kh_inverse_of_running_integral, segment_drift, weight_moment,
                               weight_R_delta, weight_R_xi)
from fracsfde.grid import TimeGrid
from fracsfde.sfde_models import linear_model, toy_model
from fracsfde.solvers import solve_reference


def reference(model, T=1.0, M=8, substeps=8, n=100, seed=0, H=0.75):
    g = TimeGrid(model.tau, T, M, substeps)
    return solve_reference(model, fbm_from_wiener(sample_wiener(g, seed, model.m, n), H))


def test_driver_of_constant_drift_closed_form():
    H = 0.75
    g = TimeGrid.uniform(1.0, 256)
    u = kh_inverse_of_running_integral(SampledFunction(g, np.ones(257)), H)
    assert u.defined_from == 1
    t = g.fine_times[1:]
    a = H - 0.5
    coef = (1 - c0_constant(H) * a) / gamma_fn(1.5 - H) / (kh_constant(H) * gamma_fn(a))
    assert np.allclose(u.values[1:], coef * t ** (-a), rtol=1e-10)
    # the driver reproduces the running integral through the kernel
    val, _ = integrate.quad(lambda s: kh_kernel(H, 1.0, s) * coef * s ** (-a), 0, 1,
                            points=[1.0], limit=200)
    assert val == pytest.approx(1.0, rel=1e-6)


def test_driver_batched_shape():
    g = TimeGrid.uniform(1.0, 16)
    h = DriftDiscrepancy(g, np.ones((3, 17, 2)))
    u = kh_inverse_of_running_integral(h, 0.75)
    assert u.shape == (3, 17, 2)
    assert np.allclose(u[0, 1:, 0], u[2, 1:, 1])


def test_drift_discrepancy_validation():
    g = TimeGrid.uniform(1.0, 4)
    with pytest.raises(ValueError):
        DriftDiscrepancy(g, np.ones((2, 4, 1)))
    with pytest.raises(ValueError):
        DriftDiscrepancy(g, np.full((2, 5, 1), np.inf))
    assert DriftDiscrepancy(g, np.ones((1, 5, 1))).scaled(2.0).values.max() == 2.0


def test_weight_of_constant_driver_is_explicit():
    g = TimeGrid.uniform(1.0, 32)
    w = sample_wiener(g, 1, 1, 5)
    u = np.full((5, 33, 1), 0.3)
    for sign in (1, -1):
        lw = girsanov_weight(u, w, sign).log_weight
        dB = w.increments[:, 1:, 0].sum(axis=1)
        assert np.allclose(lw[:, -1], sign * 0.3 * dB - 0.5 * 0.09 * (1 - g.dt))
        assert np.all(lw[:, :2] == 0)


def test_weight_sign_and_shape_checks():
    g = TimeGrid.uniform(1.0, 8)
    w = sample_wiener(g, 1, 1, 2)
    with pytest.raises(ValueError):
        girsanov_weight(np.zeros((2, 9, 1)), w, 0)
    with pytest.raises(ValueError):
        girsanov_weight(np.zeros((3, 9, 1)), w, 1)
    with pytest.raises(WeightOverflow):
        girsanov_weight(np.full((2, 9, 1), 1e200), w, 1)


def test_h_vanishes_without_freezing_or_delay_drift():
    m = linear_model()
    y = reference(m, n=5)
    assert np.allclose(compute_h(m, y, y.grid.dt).values, 0)
    assert not np.allclose(compute_h(m, y, m.tau / 8).values, 0)


def test_h_on_delta_nodes_is_minus_delay_drift():
    m = toy_model()
    y = reference(m, n=5)
    h = compute_h(m, y, m.tau / 8).values
    z = segment_drift(m, y).values
    s = y.grid.scheme_substeps(m.tau / 8)
    assert np.allclose(h[:, ::s], -z[:, ::s])


def test_weights_are_mean_one():
    m = toy_model()
    H = 0.75
    y = reference(m, n=4000, seed=5, M=4, substeps=8)
    for w in (weight_R_xi(m, y, H), weight_R_delta(m, y, m.tau / 4, H)):
        mean, se = weight_moment(w, 1.0)
        assert abs(mean - 1) < 4 * se
        assert w.at(1.0).shape == (4000,)


def test_weight_moment_order_zero():
    m = toy_model()
    y = reference(m, n=10)
    mean, se = weight_moment(weight_R_xi(m, y, 0.75), 0.0)
    assert mean == 1.0 and se == 0.0


def test_weight_decomposition():
    m = toy_model()
    y = reference(m, n=10)
    w = weight_R_xi(m, y, 0.75)
    assert np.allclose(w.log_weight, w.stochastic - w.compensator)
    assert np.all(np.diff(w.compensator, axis=1) >= 0)
    assert np.allclose(w.terminal, np.exp(w.log_weight[:, -1]))
    assert math.isfinite(w.weight.max())
