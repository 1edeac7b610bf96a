import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from afbm.algebra import (
    Increment,
    NotClosedError,
    SewingResolutionWarning,
    cocycle_residual,
    delta,
    delta1,
    delta2,
    delta3,
    garsia_functional,
    holder_norm_C2,
    holder_norm_C3,
    increment1,
    increment2,
    integrate_germ,
    integrate_germ_function,
    multiparam_norm,
    product,
    sew_function,
    sewing,
)

pts = np.linspace(0.0, 1.0, 9)


def test_delta_of_delta_vanishes():
    rng = np.random.default_rng(0)
    g = increment1(pts, rng.standard_normal(9) + 1j * rng.standard_normal(9))
    assert np.abs(delta2(delta1(g)).dense()).max() < 1e-15
    h = Increment(pts, 2, values=rng.standard_normal((9, 9)))
    assert np.abs(delta3(delta2(h)).dense()).max() < 1e-14


def test_delta_conventions():
    g = increment1(pts, pts**2)
    dg = delta(g)
    assert dg(3, 1) == pytest.approx(pts[3] ** 2 - pts[1] ** 2)
    h = Increment(pts, 2, func=lambda t, s: pts[t] * pts[s])
    assert delta(h)(4, 2, 1) == pytest.approx(pts[4] * pts[1] - pts[4] * pts[2] - pts[2] * pts[1])


def test_product_shares_middle_index():
    a = Increment(pts, 2, func=lambda t, s: pts[t] - pts[s])
    b = Increment(pts, 2, func=lambda t, s: pts[t] + pts[s])
    ab = product(a, b)
    assert ab(5, 3, 1) == pytest.approx((pts[5] - pts[3]) * (pts[3] + pts[1]))


def test_holder_norm_of_linear_increment():
    h = Increment(pts, 2, func=lambda t, s: pts[t] - pts[s])
    assert holder_norm_C2(h, 1.0).norm == pytest.approx(1.0)
    assert holder_norm_C2(h, 0.5).norm == pytest.approx(1.0)


def test_holder_C3_surrogate_of_product():
    a = Increment(pts, 2, func=lambda t, s: pts[t] - pts[s])
    h = product(a, a)
    assert holder_norm_C3(h, 2.0).norm == pytest.approx(1.0)


def test_garsia_and_multiparam_norms():
    h = Increment(pts, 2, func=lambda t, s: np.abs(pts[t] - pts[s]) ** 0.5)
    assert garsia_functional(h, 0.25, 1.0) > 0
    base = Increment(pts, 2, values=np.zeros((9, 9)))
    up = Increment(pts, 2, values=0.01 * np.ones((9, 9)))
    assert multiparam_norm([base, up], [0.0, 0.01], 0.5) == pytest.approx(0.1)


def test_euler_germ_sewing_matches_closed_form():
    # germ g_ts = s (t - s) for X_t = t
    def dg(t, u, s):
        return s * (t - s) - u * (t - u) - s * (u - s)

    val, tail = sew_function(dg, 0.1, 0.7)
    assert val == pytest.approx(-(0.6**2) / 2, abs=1e-12)


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
@settings(max_examples=25, deadline=None)
def test_integral_of_cubic(coefs):
    X = np.polynomial.Polynomial(coefs)
    val, _ = integrate_germ_function(lambda t, s: X(s) * (X(t) - X(s)), 0.0, 1.0)
    exact = (X(1.0) ** 2 - X(0.0) ** 2) / 2
    assert abs(val - exact) <= 1e-9 * max(1.0, abs(exact))


def test_grid_sewing_inverts_delta_on_closed_increments():
    x = pts**2
    r = Increment(pts, 2, func=lambda t, s: (x[t] - x[s]) * pts[s])
    h = delta2(r)
    L = sewing(h, tail_tol=None)
    t, u, s = 7, 4, 1
    assert delta2(L)(t, u, s) == pytest.approx(h(t, u, s), abs=1e-14)


def test_grid_germ_integration_is_riemann_sum():
    g = Increment(pts, 2, func=lambda t, s: pts[s] * (pts[t] - pts[s]))
    I = integrate_germ(g, tail_tol=None)
    assert I(8, 0) == pytest.approx(np.sum(pts[:-1] * np.diff(pts)))


def test_sewing_rejects_non_closed():
    rng = np.random.default_rng(1)
    vals = rng.standard_normal((9, 9, 9))
    h = Increment(pts, 3, values=vals)
    assert cocycle_residual(h) > 1e-3
    with pytest.raises(NotClosedError):
        sewing(h)


def test_sewing_tail_warning():
    g = Increment(pts, 2, func=lambda t, s: pts[s] * (pts[t] - pts[s]))
    with pytest.warns(SewingResolutionWarning):
        sewing(delta2(g), tail_tol=1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sewing(delta2(g), tail_tol=None)


def test_increment_csv_roundtrip(tmp_path):
    import csv as _csv
    pts = np.linspace(0, 1, 4)
    h = increment2(pts, (pts[:, None] - pts[None, :])[..., None] * np.array([1.0, 2j]))
    path = tmp_path / "inc.csv"
    h.to_csv(path)
    rows = list(_csv.reader(open(path)))
    assert rows[0] == ["i0", "i1", "component", "re", "im"]
    assert len(rows) == 1 + 4 * 4 * 2
    back = np.zeros((4, 4, 2), dtype=complex)
    for i, j, c, re, im in rows[1:]:
        back[int(i), int(j), int(c)] = float(re) + 1j * float(im)
    np.testing.assert_array_equal(back, h.values)
