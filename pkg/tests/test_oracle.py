import numpy as np
import pytest

from afbm.oracle import (
    Contour,
    analytic_area_variance,
    analytic_area_variance_twofold,
    extrapolate_to_zero,
    iterated_variance_oracle,
    kernel_difference,
    kernel_difference_integral,
    mixed_area_variance,
    path_double_integral,
    path_double_integral_exact,
    segment_pair_exact,
    shifted_kernel,
    simplex_pair_integral,
    vertical_increment_variance,
)
from afbm.specfun import DomainError, boundary_covariance, kernel_constant


@pytest.mark.parametrize("contour", [Contour.straight(0.2 + 0.1j, 1.5 + 0.3j),
                                     Contour.deformed(0.0, 1.0)])
def test_path_integral_matches_closed_form(contour):
    for c in (0.0, 0.05):
        num = path_double_integral(contour, c, 0.3)
        assert num == pytest.approx(path_double_integral_exact(contour, c, 0.3), rel=1e-7)


def test_variance_of_real_increment_through_deformed_contour():
    # c_a times the double path integral is E|G_t - G_s|^2
    a, s, t = 0.3, 0.0, 1.0
    val = kernel_constant(a) * path_double_integral(Contour.deformed(s, t), 0.0, a)
    def cov(x, y):
        return boundary_covariance(x, y, a)[1]

    expect = (cov(t, t) - cov(t, s) - cov(s, t) + cov(s, s)).real
    assert val.real == pytest.approx(expect, rel=1e-6)


def test_overlapping_real_segments_rejected():
    with pytest.raises(DomainError):
        path_double_integral(Contour.straight(0, 1), 0.0, 0.3)


def test_segment_pair_closed_form_on_real_segment():
    a, c, L = 0.3, 0.1, 1.0
    val = segment_pair_exact(0, L, 0, L, c, a)
    p = 2 * a
    expect = (2 * c**p - (-1j * L + c) ** p - (1j * L + c) ** p) / (p * (p - 1))
    assert val == pytest.approx(expect)


def test_kernel_difference_is_stable():
    a = 0.3
    z, wb = 0.3 + 0.2j, 0.1 - 0.4j
    D = kernel_difference(0.2, 0.2 + 1e-12, a)(z, wb)
    naive = shifted_kernel(0.2, a)(z, wb) - shifted_kernel(0.2 + 1e-12, a)(z, wb)
    assert abs(D - naive) < 1e-15
    assert D != 0


def test_simplex_single_kernel_equals_double_integral():
    a = 0.3
    F = shifted_kernel(0.1, a)
    v = simplex_pair_integral([F], 0.0, 1.0)
    assert v == pytest.approx(segment_pair_exact(0, 1, 0, 1, 0.1, a), rel=1e-10)


def test_area_variance_two_routes_agree():
    a, eps = 0.3, 2.0**-5
    four = analytic_area_variance(0.0, 1.0, eps, a)
    two = analytic_area_variance_twofold(0.0, 1.0, eps, a)
    assert four == pytest.approx(two, rel=1e-7)


def test_area_variance_scaling():
    # self-similarity: [0, L] at height L*eps equals L**(4a) times [0, 1] at eps
    a, eps, L = 0.35, 0.05, 2.0
    assert analytic_area_variance(0, L, L * eps, a) == pytest.approx(
        L ** (4 * a) * analytic_area_variance(0, 1, eps, a), rel=1e-8)


def test_mixed_variance_positive_and_grows_below_quarter():
    a = 0.15
    v = [mixed_area_variance(0.0, 1.0, e, a) for e in (2.0**-4, 2.0**-6)]
    assert 0 < v[0] < v[1]


def test_extrapolation_recovers_limit():
    eps = 2.0 ** -np.arange(4, 10)
    vals = 1.5 + 0.3 * eps**0.6 - 0.2 * eps
    v0, coef, rms = extrapolate_to_zero(eps, vals, (0.6, 1.0))
    assert v0 == pytest.approx(1.5, abs=1e-12)
    assert rms < 1e-12


def test_vertical_increment_variance_matches_contour():
    a, t, eps, eta = 0.3, 0.5, 0.2, 0.05
    c = Contour.straight(t + 1j * eta, t + 1j * eps)
    val = kernel_constant(a) * path_double_integral_exact(c, 0.0, a)
    assert vertical_increment_variance(t, eps, eta, a) == pytest.approx(val.real)


def test_iterated_oracle_level_one():
    a, eps, eta = 0.3, 0.2, 0.1
    v = iterated_variance_oracle(1, eps, eta, 0.0, 1.0, a)
    D = kernel_difference_integral(lambda z, wb: 1.0, eps, eta, 0.0, 1.0, a)
    D2 = kernel_difference_integral(lambda z, wb: 1.0, eta, eps, 0.0, 1.0, a)
    assert v == pytest.approx(kernel_constant(a) * (D + D2).real, rel=1e-10)
    # closed form for the level-one difference at the two heights
    p = 2 * a
    G = lambda c: (2 * c**p - (-1j + c) ** p - (1j + c) ** p) / (p * (p - 1))
    exact = kernel_constant(a) * (G(2 * eps) + G(2 * eta) - 2 * G(eps + eta)).real
    assert v == pytest.approx(exact, rel=1e-9)


def test_iterated_oracle_methods_agree():
    args = (2, 0.3, 0.15, 0.0, 1.0, 0.3)
    assert iterated_variance_oracle(*args, method="telescoping") == pytest.approx(
        iterated_variance_oracle(*args, method="direct"), rel=1e-8)


def test_iterated_oracle_vanishes_at_equal_heights():
    assert abs(iterated_variance_oracle(2, 0.2, 0.2, 0.0, 1.0, 0.3)) < 1e-16
