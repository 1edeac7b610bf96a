import math
import warnings

import numpy as np
import pytest

from afbm.sampler import Grid, NoiseStream, SamplePath, sample_factorized
from afbm.signature import (
    RefinementWarning,
    build_signature,
    check_chen,
    check_shuffle,
    check_symmetric_part,
    coupled_signature_difference,
    linear_cell_levels,
    shuffles,
    smooth_signature,
    tensor_mul,
)


def _parabola(n=5, N=3):
    pts = np.linspace(0, 1, n)
    return smooth_signature(lambda x: np.stack([np.ones_like(x), 2 * x], -1), pts, N)


def test_parabola_level_two():
    rp = _parabola()
    X2 = rp.level(2, rp.n_points - 1, 0)
    assert X2[0, 1] == pytest.approx(1 / 3)  # int u^2 du: first index is the later increment
    assert X2[1, 0] == pytest.approx(2 / 3)
    assert X2[0, 0] == pytest.approx(1 / 2)
    assert X2[0, 1] + X2[1, 0] == pytest.approx(1.0)


def test_one_dimensional_levels_are_powers():
    g = Grid.uniform(0, 1, 9, height=0.1)
    sp = sample_factorized(g, 0.3, 1, NoiseStream(4))
    rp = build_signature(sp, N=3, M=None)
    dx = sp.values[0, -1] - sp.values[0, 0]
    for n in (1, 2, 3):
        assert rp.level(n, 8, 0).ravel()[0] == pytest.approx(dx**n / math.factorial(n))


def test_level_one_is_path_increment():
    g = Grid.uniform(0, 1, 9, height=0.1)
    sp = sample_factorized(g, 0.3, 2, NoiseStream(4))
    rp = build_signature(sp, N=2, M=8, warn=False)
    assert np.allclose(rp.level(1, 6, 2), sp.values[:, 6] - sp.values[:, 2])
    assert np.all(rp.level(2, 3, 3) == 0)


def test_chen_exact_by_construction():
    g = Grid.uniform(0, 1, 12, height=0.05)
    sp = sample_factorized(g, 0.22, 2, NoiseStream(5))
    rp = build_signature(sp, M=16, warn=False)
    assert rp.N == 4
    rep = check_chen(rp)
    assert rep.passed and rep.max_residual < 1e-12


def test_tensor_mul_associative():
    rng = np.random.default_rng(0)
    els = [[rng.standard_normal(2**n) for n in (1, 2, 3)] for _ in range(3)]
    a, b, c = els
    left = tensor_mul(tensor_mul(a, b), c)
    right = tensor_mul(a, tensor_mul(b, c))
    for x, y in zip(left, right):
        assert np.allclose(x, y)


def test_linear_levels_closed_form():
    delta = np.array([0.3, -1.2])
    M = 7
    lv = linear_cell_levels(delta, 2, M)
    assert np.allclose(lv[1], math.comb(M, 2) / M**2 * np.outer(delta, delta).ravel())


def test_shuffle_count():
    words = list(shuffles((0, 1), (2,)))
    assert len(words) == math.comb(3, 1)
    assert (2, 0, 1) in words and (0, 1, 2) in words


def test_shuffle_exact_for_polygon_and_order_one_for_left_sums():
    g = Grid.uniform(0, 1, 9, height=2**-4)
    sp = sample_factorized(g, 0.3, 2, NoiseStream(8))
    exact = build_signature(sp, N=3, M=None)
    assert check_shuffle(exact).max_residual < 1e-12
    r1 = check_shuffle(build_signature(sp, N=3, M=16, warn=False)).max_residual
    r2 = check_shuffle(build_signature(sp, N=3, M=32, warn=False)).max_residual
    assert r1 / r2 == pytest.approx(2.0, rel=0.05)
    assert check_symmetric_part(exact).max_residual < 1e-12


def test_sampled_substeps_and_refinement_warning():
    fine = Grid.uniform(0, 1, 4 * 8 + 1, height=0.05)
    sp = sample_factorized(fine, 0.3, 2, NoiseStream(9))
    with pytest.warns(RefinementWarning):
        rp = build_signature(sp, N=2, M=8, sampled_substeps=True, quad_tol=1e-8)
    assert rp.n_points == 5
    assert np.allclose(rp.level(1, 4, 0), sp.values[:, -1] - sp.values[:, 0])
    with pytest.raises(ValueError):
        build_signature(sp, N=2, M=5, sampled_substeps=True)


def test_size_limits():
    g = Grid.uniform(0, 1, 3, height=0.1)
    sp = sample_factorized(g, 0.3, 4, NoiseStream(1))
    with pytest.raises(ValueError):
        build_signature(sp, N=2)
    sp2 = sample_factorized(g, 0.3, 2, NoiseStream(1))
    with pytest.raises(ValueError):
        build_signature(sp2, N=5)


def test_coupled_difference_vanishes_for_equal_heights():
    g = Grid.uniform(0, 1, 5, height=0.1)
    sp = sample_factorized(g, 0.3, 2, NoiseStream(1))
    a = build_signature(sp, N=2, M=None)
    b = build_signature(sp, N=2, M=None)
    assert np.all(coupled_signature_difference(a, b, 2, 4, 0) == 0)


def test_json_export():
    import json

    rp = _parabola(3, 2)
    data = json.loads(rp.to_json())
    assert data["d"] == 2 and data["N"] == 2
    assert len(data["levels"][1]["entries"]) == 3 * 4  # three pairs, four index tuples
