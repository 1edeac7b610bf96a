import numpy as np
import pytest

from afbm.quadrature import (
    QuadratureError,
    adaptive_rectangle,
    adaptive_segment,
    cumulative_matrix,
    gauss_legendre,
    graded_breaks,
)


def test_gauss_legendre_exact_for_polynomials():
    x, w = gauss_legendre(6)
    for k in range(12):
        assert np.sum(w * x**k) == pytest.approx(1 / (k + 1))


def test_cumulative_matrix():
    x, _ = gauss_legendre(8)
    Q = cumulative_matrix(8)
    assert np.allclose(Q @ (3 * x**2), x**3)


def test_graded_breaks_cover_interval():
    b = graded_breaks(2.0, 1e-6)
    assert b[0] == 0 and b[-1] == pytest.approx(2.0)
    assert np.all(np.diff(b) > 0)
    assert b[1] <= 1e-6 * 2


def test_adaptive_segment_complex_path():
    val, err = adaptive_segment(lambda z: np.exp(z), 0, 1 + 1j)
    assert val == pytest.approx(np.exp(1 + 1j) - 1, rel=1e-12)


def test_adaptive_segment_vector_valued():
    val, _ = adaptive_segment(lambda z: np.stack([z, z**2]), 0, 2)
    assert np.allclose(val, [2, 8 / 3])


def test_adaptive_rectangle():
    val, _ = adaptive_rectangle(lambda u, v: np.sqrt(u + v + 0.01), rtol=1e-10)
    exact = (4 / 15) * ((2.01) ** 2.5 - 2 * 1.01**2.5 + 0.01**2.5)
    assert val == pytest.approx(exact, rel=1e-9)


def test_rectangle_depth_limit():
    with pytest.raises(QuadratureError):
        adaptive_rectangle(lambda u, v: (u + v) ** -1.5, rtol=1e-12, max_depth=6)
