import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conic_lens.boundary import Circle, Sphere, Torus, TrigPoly, make_boundary


def test_circle_flow_is_translation():
    b = Circle()
    y, eta = b.flow(np.array([0.3]), np.array([1.7]), 0.9)
    assert y[0] == pytest.approx(0.3 + 0.9 * 1.7)
    assert eta[0] == 1.7


def test_circle_of_other_length_scales_speed():
    b = Circle(4 * np.pi)  # h0 = 4 dtheta^2
    y, eta = b.flow(np.array([0.0]), np.array([2.0]), 1.0)
    assert y[0] == pytest.approx(0.5)
    assert b.norm(np.array([0.0]), np.array([2.0])) == pytest.approx(1.0)


@pytest.mark.parametrize("radius", [1.0, 0.7, 2.5])
def test_sphere_period(radius):
    b = Sphere(radius)
    y0 = np.array([1.1, 0.4])
    eta0 = np.array([0.3, -0.8])
    eta0 = eta0 / b.norm(y0, eta0)
    y, eta = b.flow(y0, eta0, 2 * np.pi * radius)
    assert np.allclose(b.difference(y, y0), 0, atol=1e-12)
    assert np.allclose(eta, eta0, atol=1e-12)


@given(st.floats(0.3, 2.8), st.floats(0, 6.28), st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 10))
def test_sphere_flow_preserves_norm(th, ph, a, b_, s):
    if abs(a) + abs(b_) < 1e-3:
        return
    b = Sphere(1.3)
    y0 = np.array([th, ph])
    eta0 = np.array([a, b_])
    y, eta = b.flow(y0, eta0, s)
    assert b.norm(y, eta) == pytest.approx(b.norm(y0, eta0), rel=1e-12)


@given(st.floats(0.3, 2.8), st.floats(0, 6.28), st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 3), st.floats(0, 3))
def test_sphere_flow_composes(th, ph, a, b_, s1, s2):
    if abs(a) + abs(b_) < 1e-3:
        return
    b = Sphere()
    y0, eta0 = np.array([th, ph]), np.array([a, b_])
    y1, e1 = b.flow(*b.flow(y0, eta0, s1), s2)
    y2, e2 = b.flow(y0, eta0, s1 + s2)
    assert np.allclose(b.difference(y1, y2), 0, atol=1e-9)
    assert np.allclose(e1, e2, atol=1e-9)


def test_torus_flow_and_distance():
    b = Torus((2.0, 3.0))
    y, eta = b.flow(np.array([0.1, 0.2]), np.array([1.0, 2.0]), 0.5)
    # h0 = diag(L_i / 2 pi)^2, so dy = h0^-1 eta s
    c = np.array([2.0, 3.0]) / (2 * np.pi)
    assert np.allclose(y, [0.1 + 0.5 / c[0] ** 2, 0.2 + 1.0 / c[1] ** 2])


def test_sphere_great_circle_distance():
    b = Sphere(2.0)
    assert b.distance(np.array([0.5, 0.0]), np.array([0.5 + 0.3, 0.0])) == pytest.approx(0.6)


def test_trig_poly_jet_matches_differences():
    p = TrigPoly.make([(1.0, [1, 2], 0.3), (0.5, [0, 1])])
    y = np.array([0.4, 1.1])
    v, g, hs = p.jet(y)
    h = 1e-5
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        assert g[i] == pytest.approx((p(y + e) - p(y - e)) / (2 * h), abs=1e-8)
        gi = (p.jet(y + e)[1] - p.jet(y - e)[1]) / (2 * h)
        assert np.allclose(hs[i], gi, atol=1e-7)


def test_make_boundary_rejects_unknown():
    with pytest.raises(ValueError):
        make_boundary("hyperboloid")
