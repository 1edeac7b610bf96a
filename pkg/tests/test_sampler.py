import numpy as np
import pytest

from afbm.sampler import (
    FactorizedSampler,
    Grid,
    NoiseStream,
    SeriesSampler,
    TruncationError,
    covariance_matrix,
    empirical_moments,
    regularize,
    sample_factorized,
    sample_series,
)
from afbm.specfun import halfplane_covariance


def test_noise_is_deterministic_and_prefix_stable():
    s = NoiseStream(7).child("x")
    a = s.replica_block(0, 3000, 4)
    b = s.replica_block(1000, 2500, 4)
    assert np.array_equal(a[1000:2500], b)
    assert np.array_equal(a, NoiseStream(7).child("x").replica_block(0, 3000, 4))
    assert not np.array_equal(a, NoiseStream(7).child("y").replica_block(0, 3000, 4))


def test_complex_noise_moments():
    xi = NoiseStream(3).complex_normal(200_000)
    assert np.mean(np.abs(xi) ** 2) == pytest.approx(1.0, abs=0.01)
    assert abs(np.mean(xi**2)) < 0.01


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(np.array([0.0, -0.1j]))
    with pytest.raises(ValueError):
        Grid(np.array([0.0, 0.0]))
    g = Grid.uniform(0, 1, 5)
    assert len(g.refine(4)) == 17
    assert regularize(g, 0.1).base_height == pytest.approx(0.1)


def test_anchor_is_pinned():
    g = Grid.uniform(-1, 1, 11)
    v = sample_factorized(g, 0.3, 2, NoiseStream(1)).values
    assert np.all(v[:, 5] == 0)


def test_covariance_anchor_subtraction():
    z = np.array([0.2 + 0.1j, 0.7 + 0.3j, 1.0 + 0.1j])
    R = covariance_matrix(z, 0.3, anchor=z[0])
    assert abs(R[0, 0]) < 1e-15
    full = halfplane_covariance(z[:, None], z[None, :], 0.3)
    expect = full[2, 1] - full[2, 0] - full[0, 1] + full[0, 0]
    assert R[2, 1] == pytest.approx(expect)


def test_factorized_matches_covariance_in_mean():
    g = Grid.uniform(0, 1, 6, height=0.1)
    fs = FactorizedSampler(g, 0.3)
    v = fs.draw(NoiseStream(11), 1, 0, 40_000)[:, 0]
    mom = empirical_moments(v)
    m, se = mom["cov"]
    R = covariance_matrix(g.points, 0.3)
    assert np.all(np.abs(m.real - R.real) < 5 * se.real + 1e-12)
    pm, pse = mom["pseudo"]
    assert np.all(np.abs(pm.real) < 5 * pse.real + 1e-12)


def test_series_and_factorized_share_covariance():
    g = Grid(np.array([0.5 + 0.2j, 0.8 + 0.25j, 1.1 + 0.2j]))
    ss = SeriesSampler(g, 0.3)
    W = ss.weights
    R_series = W.T @ np.conj(W)
    R_exact = covariance_matrix(g.points, 0.3, anchor=g.points[g.anchor_index])
    assert np.allclose(R_series, R_exact, atol=1e-7)


def test_series_refuses_real_axis_and_short_truncation():
    with pytest.raises(ValueError):
        SeriesSampler(Grid.uniform(0, 1, 3), 0.3)
    with pytest.raises(TruncationError):
        SeriesSampler(Grid(np.array([0.5 + 0.01j, 0.6 + 0.01j])), 0.3, K=5)


def test_sample_path_csv(tmp_path):
    g = Grid.uniform(0, 1, 4, height=0.1)
    sp = sample_series(g, 0.3, 2, None, NoiseStream(2))
    p = tmp_path / "path.csv"
    sp.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[1] == "component,re_t,im_t,re_value,im_value"
    assert len(lines) == 2 + 2 * 4
