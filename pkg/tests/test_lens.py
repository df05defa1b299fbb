import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conic_lens.boundary import Circle, Sphere
from conic_lens.geometry import CollarBump, ConformalBump, ExactCone, TensorBump
from conic_lens.lens import (bdf_change_gap, bump_trace_direct, large_eta_scattering,
                             lens_variation, perturbative_identities, renormalized_length,
                             scattering_map)

METHODS = ("cut-extrapolation", "tau-subtraction", "limit")


@pytest.mark.parametrize("eta", [0.6, 1.0, 3.0, -2.0])
def test_cone_scattering_closed_form(cone, eta):
    y1, eta1 = scattering_map(cone, [0.4], [eta])
    assert np.mod(y1[0] - 0.4 - np.pi * np.sign(eta) + np.pi, 2 * np.pi) - np.pi == pytest.approx(0, abs=1e-9)
    assert eta1[0] == pytest.approx(eta, abs=1e-9)


@pytest.mark.parametrize("method", METHODS)
def test_flat_cones_have_zero_length(method):
    # every exact cone over a circle is flat, and the ends of a straight line cancel
    model = ExactCone(Circle(np.pi))
    rec = renormalized_length(model, [0.1], [1.7], method)
    assert rec.status == "ok"
    assert abs(rec.length) < 1e-6


def test_methods_agree_on_a_warped_product(warped2):
    recs = [renormalized_length(warped2, [0.3], [1.2], m) for m in METHODS]
    vals = [r.length for r in recs]
    assert max(vals) - min(vals) < 1e-6
    assert abs(vals[0]) > 1e-3


def test_unknown_method(cone):
    with pytest.raises(ValueError):
        renormalized_length(cone, [0.0], [1.0], "midpoint")


@pytest.mark.parametrize("terms", [[(0.3, [0])], [(0.2, [1], 0.4)], [(0.1, [0]), (0.25, [2])]])
def test_bdf_change_shifts_by_endpoint_values(warped2, terms):
    gap, expected = bdf_change_gap(warped2, [0.3], [1.2], terms)
    assert gap == pytest.approx(expected, abs=1e-6)


def test_time_reversal(perturbed_sphere):
    y0, eta0 = np.array([1.1, 0.2]), np.array([0.8, 0.9])
    y1, eta1 = scattering_map(perturbed_sphere, y0, eta0)
    y2, eta2 = scattering_map(perturbed_sphere, y1, -eta1)
    assert np.allclose(perturbed_sphere.boundary.difference(y2, y0), 0, atol=1e-8)
    assert np.allclose(eta2, -eta0, atol=1e-8)


@settings(max_examples=5)
@given(st.floats(0, 6.2), st.floats(0.6, 3.0))
def test_scattering_map_preserves_area(y, eta):
    from conic_lens.geometry import PerturbedConic
    model = PerturbedConic(Circle(), [(1, 0.4, [([(1.0, [1])], "h0")])])
    h = 1e-5
    J = np.empty((2, 2))
    for j, dv in enumerate(([h, 0.0], [0.0, h])):
        p = scattering_map(model, [y + dv[0]], [eta + dv[1]])
        m = scattering_map(model, [y - dv[0]], [eta - dv[1]])
        J[0, j] = model.boundary.difference(p[0], m[0])[0] / (2 * h)
        J[1, j] = (p[1][0] - m[1][0]) / (2 * h)
    assert np.linalg.det(J) == pytest.approx(1.0, abs=1e-6)


def test_conformal_bump_missed_geodesic(cone):
    bump = CollarBump(0.6, np.array([np.pi]), 0.1, 0.3)
    model = ConformalBump(cone, bump, 0.3)
    # entering at y = 0 with small |eta| the geodesic reaches rho = 1/|eta| near y = pi / 2
    y_a, e_a = scattering_map(model, [0.0], [3.0])
    y_b, e_b = scattering_map(cone, [0.0], [3.0])
    assert np.allclose(y_a, y_b, atol=1e-10) and np.allclose(e_a, e_b, atol=1e-10)
    assert abs(renormalized_length(model, [0.0], [3.0], "limit").length) < 1e-8


def test_metric_bump_variation(cone):
    bump = CollarBump(0.45, np.array([0.0]), 0.15, 0.8)
    q = TensorBump(bump, "g", reference=cone)
    res = lens_variation(cone, q, [-0.5], [1.1])
    assert res.status == "ok"
    assert abs(res.i2) > 1e-2
    assert res.i2 == pytest.approx(bump_trace_direct(cone, q, 1.0, [-0.5], [1.1]), abs=1e-7)
    assert res.derivative == pytest.approx(0.5 * res.i2, abs=1e-5)


class _Constant:
    """T = c h0^-1 on a given boundary."""

    def __init__(self, boundary, m, c=1.0):
        self.boundary, self.m, self.c = boundary, m, c

    def form(self, y, eta):
        return self.c * self.boundary.norm(y, eta) ** 2

    def h0_derivative(self, y, eta):
        return 0.0


@pytest.mark.parametrize("boundary", [Circle(), Sphere()], ids=["circle", "sphere"])
def test_identities_for_constant_tensor(boundary):
    y0 = np.zeros(boundary.d) + 1.0
    eta0 = np.ones(boundary.d)
    res = perturbative_identities(_Constant(boundary, 2), y0, eta0)
    assert res["equdirectionH0"] == pytest.approx(-np.pi / 4, abs=1e-8)
    assert abs(res["equcos"]) < 1e-12
    assert res["energyvar"] == 0.0
    zero = perturbative_identities(_Constant(boundary, 2, 0.0), y0, eta0)
    assert all(v == 0.0 for v in zero.values())


def test_large_eta_scattering_converges(perturbed_circle):
    res = large_eta_scattering(perturbed_circle, [0.3], [1.0], [0.08, 0.04, 0.02])
    assert res["rate"] > 0.9
