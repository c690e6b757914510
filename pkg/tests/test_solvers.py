import numpy as np
import pytest

from fracsfde.fbm_paths import fbm_from_wiener, sample_wiener
from fracsfde.grid import TimeGrid
from fracsfde.sfde_models import get_model, hamiltonian_example, linear_model, toy_model
from fracsfde.solvers import (SolverDivergence, moment_bound_check, pathwise_bound,
                              solve_em_truncated, solve_reference)


def driven(model, T=1.0, M=8, substeps=8, n=50, seed=0, H=0.75):
    g = TimeGrid(model.tau, T, M, substeps)
    return fbm_from_wiener(sample_wiener(g, seed, model.m, n), H)


def test_reference_glues_initial_segment():
    m = toy_model()
    fb = driven(m)
    y = solve_reference(m, fb)
    assert np.all(y.values[:, : fb.grid.n_hist + 1] == 0.1)
    assert y.positive_part.shape == (50, fb.grid.n_steps + 1, 1)
    assert y.at(0.0)[0, 0] == 0.1


def test_em_with_fine_delta_matches_reference_without_delay_drift():
    m = linear_model()
    fb = driven(m)
    y = solve_reference(m, fb)
    x = solve_em_truncated(m, fb, fb.grid.dt)
    assert np.allclose(x.values, y.values, atol=1e-13)


def test_em_linear_model_exact_recursion():
    # with b(x) = -L x frozen per delta-step the EM map is affine in the noise
    m = linear_model(L=2.0)
    fb = driven(m, M=4, substeps=4, n=3)
    g = fb.grid
    delta = g.delta
    x = solve_em_truncated(m, fb, delta).positive_part[:, :, 0]
    s = g.scheme_substeps(delta)
    B = fb.values[:, :, 0]
    for k in range(0, g.n_steps, s):
        want = x[:, k] * (1 - 2.0 * delta) + (B[:, k + s] - B[:, k])
        assert np.allclose(x[:, k + s], want, atol=1e-12)


def test_em_errors_shrink_with_delta():
    m = toy_model()
    fb = driven(m, M=16, substeps=8, n=200)
    y = solve_em_truncated(m, fb, fb.grid.dt)
    errs = [np.abs(solve_em_truncated(m, fb, m.tau / M).at(1.0) - y.at(1.0)).mean()
            for M in (2, 4, 8)]
    assert errs[0] > errs[1] > errs[2]


def test_em_rejects_incommensurate_delta():
    m = toy_model()
    fb = driven(m, n=2)
    with pytest.raises(ValueError):
        solve_em_truncated(m, fb, 0.3)


def test_dimension_and_tau_checks():
    m = toy_model()
    with pytest.raises(ValueError):
        solve_reference(m, driven(toy_model(tau=0.25), n=2))
    g = TimeGrid(m.tau, 1.0, 8, 8)
    two_dim = fbm_from_wiener(sample_wiener(g, 0, 2, 2), 0.75)
    with pytest.raises(ValueError):
        solve_reference(m, two_dim)


def test_divergence_is_reported():
    from dataclasses import replace
    m = replace(toy_model(), b=lambda x: x**3, structure=None)
    fb = driven(m, n=2, H=0.75)
    fb = fb.__class__(fb.grid, fb.H, fb.values * 1e3, fb.wiener)
    with pytest.raises(SolverDivergence):
        with np.errstate(over="ignore", invalid="ignore"):
            solve_reference(m, fb)


def test_hamiltonian_free_particle_is_integrated_exactly():
    m = hamiltonian_example(1, lambda x1, x2: np.zeros_like(x2),
                            lambda seg: np.zeros((seg.path.shape[0], 1)), [[0.7]])
    fb = driven(m, n=4)
    g = fb.grid
    x = solve_em_truncated(m, fb, g.delta).positive_part
    x2 = 0.7 * fb.values[:, :, 0]
    assert np.allclose(x[:, :, 1], x2, atol=1e-13)
    trap = np.zeros_like(x2)
    trap[:, 1:] = np.cumsum(0.5 * (x2[:, 1:] + x2[:, :-1]), axis=1) * g.dt
    assert np.allclose(x[:, :, 0], 1.0 + trap, atol=1e-12)


def test_hamiltonian_default_runs():
    m = get_model("hamiltonian")
    fb = driven(m, n=20)
    x = solve_em_truncated(m, fb, m.tau / 8)
    assert np.all(np.isfinite(x.values))


@pytest.mark.parametrize("name", ["toy", "fou", "linear", "hamiltonian"])
def test_pathwise_bounds_hold(name):
    rep = moment_bound_check(get_model(name), 200, 3, 1.0, substeps=64)
    assert rep.violation_rate == 0 and rep.sup_violation_rate == 0


def test_proof_growth_bound_is_not_weaker():
    m = toy_model()
    fb = driven(m, n=20)
    y = solve_reference(m, fb)
    # K1bar = K2bar = 1 for K1 = 0, so the two forms coincide
    assert np.allclose(pathwise_bound(m, y, "display"), pathwise_bound(m, y, "proof"))
    with pytest.raises(ValueError):
        pathwise_bound(m, y, "other")
