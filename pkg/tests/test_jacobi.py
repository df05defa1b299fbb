import numpy as np
import pytest

from conic_lens.dynamics import integrate, integrate_entry, outgoing_samples
from conic_lens.geometry import WarpedProduct
from conic_lens.jacobi import (conjugate_scan, jacobi_growth_check, jacobi_integrate,
                               scalar_jacobi_times, window_times, wronskian)
from conic_lens.profiles import RadialProfile


@pytest.fixture(scope="module")
def capped():
    return WarpedProduct.build("circle", RadialProfile(0.5, 1.0, 3.0))


def test_flat_jacobi_fields_are_affine(plane):
    tr = integrate_entry(plane, [0.3], [1.5])
    J0 = np.array([[0.0, 0.2], [1.0, -0.4]])
    Jd0 = np.array([[0.5, 0.0], [0.3, 1.0]])
    jf = jacobi_integrate(plane, tr, J0, Jd0, rho_window=0.05)
    for t in np.linspace(0.5, 0.9 * jf.t_end, 5):
        assert np.allclose(jf.U(t), J0 + t * Jd0, atol=1e-8)
        assert np.allclose(jf.Udot(t), Jd0, atol=1e-8)


def test_frame_stays_orthonormal(perturbed_sphere):
    tr = integrate_entry(perturbed_sphere, [1.0, 0.5], [0.7, 1.0])
    jf = jacobi_integrate(perturbed_sphere, tr, np.zeros(3), np.array([0, 1.0, 0]), rho_window=0.05)
    assert jf.frame_drift < 1e-8


def test_wronskian_and_linearity(capped):
    tr = integrate_entry(capped, [0.0], [0.8])
    J0 = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 1.0]])
    Jd0 = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 2.0]])
    jf = jacobi_integrate(capped, tr, J0, Jd0, rho_window=0.05)
    w0 = wronskian(jf, jf.tau0, 0, 1)
    for tau in np.linspace(jf.tau0, jf.tau1, 7):
        assert wronskian(jf, tau, 0, 1) == pytest.approx(w0, abs=1e-8)
        _, _, U, Ud, _ = jf.at_tau(tau)
        # third column was started from J_a + 2 J_b
        assert np.allclose(U[:, 2], U[:, 0] + 2 * U[:, 1], atol=1e-8 * (1 + np.abs(U).max()))


def test_jacobi_equation_residual(capped):
    tr = integrate_entry(capped, [0.0], [0.8])
    jf = jacobi_integrate(capped, tr, np.array([0.0, 1.0]), np.array([0.0, 0.5]), rho_window=0.05)
    for t in (1.0, 0.5 * jf.t_end):
        assert jf.residual(t) < 1e-6


def test_conjugate_points_match_scalar_equation(capped):
    tr = integrate_entry(capped, [0.0], [0.8])
    times, jf = conjugate_scan(capped, tr, rho_window=0.05)
    oracle = scalar_jacobi_times(tr, lambda r: capped.profile.gauss(1 / r), (jf.tau0, jf.tau1))
    assert len(times) >= 1
    assert len(times) == len(oracle)
    assert np.allclose(times, oracle, atol=1e-6)


def test_convex_profile_has_no_conjugate_points(warped2):
    tr = integrate_entry(warped2, [0.0], [0.6])
    times, _ = conjugate_scan(warped2, tr, rho_window=0.05)
    assert times == []


def test_window_requires_entry(cone):
    tr = integrate_entry(cone, [0.0], [50.0])
    assert window_times(tr, 0.05) is None
    with pytest.raises(ValueError):
        jacobi_integrate(cone, tr, np.zeros(2), np.ones(2), rho_window=0.05)


def test_growth_on_the_cone(cone, rng):
    trs = [integrate(cone, z) for z in outgoing_samples(cone, 0.1, 3, rng)]
    rep = jacobi_growth_check(cone, trs, rng, rho_window=0.02)
    # flat: J' is constant and |J(t)| - |J(0)| <= t |J'(0)|
    assert rep.C_derivative <= 1.0 + 1e-8
    assert rep.C_position <= 1.0 + 1e-8


def test_curvature_operator_decays(perturbed_circle):
    tr = integrate_entry(perturbed_circle, [0.3], [1.2])
    jf = jacobi_integrate(perturbed_circle, tr, np.zeros(2), np.array([0.0, 1.0]), rho_window=2e-3)
    taus = np.linspace(jf.tau0, jf.tau0 + 0.05, 8)[1:]
    rhos = np.array([jf.at_tau(t)[0][0] for t in taus])
    norms = np.array([np.abs(jf.curvature_operator(t)).max() for t in taus])
    slope = np.polyfit(np.log(rhos), np.log(norms), 1)[0]
    assert slope > 3.9
