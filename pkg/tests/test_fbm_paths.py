import io

import numpy as np
import pytest
from scipy import stats

from fracsfde.fbm_paths import (covariance, dump_paths, fbm_from_wiener, fernique_check,
                                fernique_threshold, holder_moment_bound, holder_moment_check,
                                holder_norm, holder_norms, path_rng, sample_fbm_cholesky,
                                sample_wiener, sup_norm, volterra_matrix)
from fracsfde.grid import TimeGrid


def test_covariance_properties():
    H = 0.7
    assert covariance(H, 1.0, 1.0) == pytest.approx(1.0)
    assert covariance(H, 0.3, 0.8) == covariance(H, 0.8, 0.3)
    assert covariance(0.5, 0.3, 0.8) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        covariance(H, -1.0, 0.5)


def test_path_rng_is_keyed_by_seed_and_index():
    a = path_rng(1, 5).standard_normal(4)
    assert np.array_equal(a, path_rng(1, 5).standard_normal(4))
    assert not np.array_equal(a, path_rng(1, 6).standard_normal(4))
    assert not np.array_equal(a, path_rng(2, 5).standard_normal(4))


def test_wiener_batches_are_slices_of_one_run():
    g = TimeGrid.uniform(1.0, 32)
    whole = sample_wiener(g, 9, 2, 10)
    part = sample_wiener(g, 9, 2, 4, first_index=3)
    assert np.array_equal(whole.increments[3:7], part.increments)
    assert whole.values.shape == (10, 33, 2)
    assert np.all(whole.values[:, 0] == 0)


def test_volterra_matrix_rows_reproduce_variance():
    H, n = 0.75, 256
    g = TimeGrid.uniform(1.0, n)
    A = volterra_matrix(n, g.dt, H)
    var = (A**2).sum(axis=1) * g.dt
    t = g.fine_times
    # cell averaging loses a little variance near the diagonal only
    assert np.allclose(var[n // 4:], t[n // 4:] ** (2 * H), rtol=2e-2)
    assert not A.flags.writeable


def test_fbm_covariance_empirical():
    H = 0.75
    g = TimeGrid.uniform(1.0, 64)
    fb = fbm_from_wiener(sample_wiener(g, 3, 1, 5000), H)
    idx = [16, 40, 64]
    C = np.cov(fb.values[:, idx, 0].T)
    R = covariance(H, g.fine_times[idx][:, None], g.fine_times[idx][None, :])
    assert np.max(np.abs(C - R) / R) < 0.08


def test_fbm_increments_positively_correlated():
    g = TimeGrid.uniform(1.0, 64)
    inc = fbm_from_wiener(sample_wiener(g, 4, 1, 4000), 0.8).increments[:, :, 0]
    r = np.corrcoef(inc[:, 30], inc[:, 31])[0, 1]
    assert r > 0.2


def test_cholesky_oracle_terminal_law():
    H = 0.7
    g = TimeGrid.uniform(2.0, 32)
    v = sample_fbm_cholesky(g, H, 1, 1, 4000).values[:, -1, 0]
    assert stats.kstest(v / 2**H, "norm").pvalue > 0.01


def test_cholesky_size_limit():
    with pytest.raises(ValueError):
        sample_fbm_cholesky(TimeGrid.uniform(1.0, 5000), 0.7, 0)


def test_holder_norm_of_line():
    t = np.linspace(0, 1, 101)
    est = holder_norm(3 * t, t, 1.0)
    assert est.value == pytest.approx(3.0)
    assert holder_norm(t**2, t, 1.0, a=0.0, b=0.5).value == pytest.approx(1.0, rel=1e-2)
    with pytest.raises(ValueError):
        holder_norm(t, t, 1.0, a=0.2, b=0.2)


def test_holder_norms_vector_valued():
    t = np.linspace(0, 1, 11)
    vals = np.stack([3 * t, 4 * t], axis=-1)[None]
    assert holder_norms(vals, 0.1, 1.0)[0] == pytest.approx(5.0)


def test_sup_norm():
    assert sup_norm([[1.0, 0.0], [3.0, 4.0]]) == 5.0
    with pytest.raises(ValueError):
        sup_norm([])


def test_fernique_bound_at_half_threshold():
    thr = fernique_threshold(0.75, 0.6, 1.0)
    rep = fernique_check(0.75, 0.6, 1.0, thr / 2, 2000, 5)
    assert rep.satisfied and rep.bound == pytest.approx(2**0.5)


def test_fernique_sup_variant_finite():
    rep = fernique_check(0.75, 0.6, 1.0, 0.1, 500, 5, variant="sup", n_steps=64)
    assert rep.satisfied and np.isfinite(rep.empirical_mean)


def test_fernique_rejects_coefficient_above_threshold():
    thr = fernique_threshold(0.75, 0.6, 1.0)
    with pytest.raises(ValueError):
        fernique_check(0.75, 0.6, 1.0, thr, 10, 0)


def test_holder_moment_bound():
    assert holder_moment_bound(0.75, 0.6, 0.5, 1) == pytest.approx(64.0)
    assert holder_moment_check(0.75, 0.6, 1.0, 2, 500, 1, n_steps=64).satisfied


def test_dump_paths_format():
    buf = io.StringIO()
    dump_paths(buf, np.array([0.0, 0.5]), np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert buf.getvalue().splitlines() == ["t,x0,x1", "0.0,1.0,2.0", "0.5,3.0,4.0"]
