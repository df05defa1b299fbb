"""Acceptance criteria, one test per criterion.

Each test records a one-line verdict that is printed in the terminal summary.
"""
import time

import numpy as np
import pytest

from conftest import CRITERIA
from conic_lens.boundary import Circle, Sphere, TrigPoly, Torus
from conic_lens.dynamics import (DualJetDifference, asymptotic_bounds_check, cone_solution,
                                 integrate, integrate_entry, linearized_difference,
                                 outgoing_samples)
from conic_lens.geometry import (CollarBump, ExactCone, PerturbedConic, TensorBump,
                                 WarpedProduct, curvature_decay_rates)
from conic_lens.jacobi import conjugate_scan, scalar_jacobi_times
from conic_lens.lens import (bdf_change_gap, large_eta_scattering, lens_variation,
                             perturbative_identities, renormalized_length, scattering_map)
from conic_lens.profiles import RadialProfile
from conic_lens.tensors import BumpField, CollarField, FunctionField, gauge_normalize, sym_derivative
from conic_lens.transform import boundary_pi_transform, xray_many


def report(n, name, passed, detail):
    line = f"criterion {n:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
    CRITERIA.append(line)
    print(line)


def sphere_entry(rng, lo, hi, b=Sphere()):
    """Random entry whose boundary geodesic stays at least 0.4 away from the poles."""
    while True:
        y = np.array([rng.uniform(0.5, np.pi - 0.5), rng.uniform(0, 2 * np.pi)])
        eta = rng.normal(size=2)
        eta = eta / b.norm(y, eta)
        # Clairaut: the geodesic reaches sin(theta) = |eta_phi| / |eta|
        if abs(eta[1]) >= np.sin(0.4):
            return y, eta * rng.uniform(lo, hi)


def circle_entry(rng, lo, hi):
    return np.array([rng.uniform(0, 2 * np.pi)]), np.array([rng.choice([-1, 1]) * rng.uniform(lo, hi)])


def test_exact_cone_flow():
    rng = np.random.default_rng(101)
    worst_state, worst_tau = 0.0, 0.0
    cases = [(Circle(), circle_entry(rng, 0.5, 8.0)) for _ in range(192)]
    cases += [(Sphere(), sphere_entry(rng, 0.5, 8.0)) for _ in range(64)]
    for b, (y0, eta0) in cases:
        model = ExactCone(b)
        tr = integrate_entry(model, y0, eta0)
        e = b.norm(y0, eta0)
        worst_tau = max(worst_tau, abs(tr.tau_plus - np.pi / e))
        for t in np.linspace(0, tr.tau_plus, 17):
            a, c = tr.state(t), cone_solution(b, y0, eta0, t)
            dz = a - c
            dz[1:1 + b.d] = b.difference(a[1:1 + b.d], c[1:1 + b.d])
            worst_state = max(worst_state, float(np.max(np.abs(dz))))
    ok = worst_state <= 1e-8 and worst_tau <= 1e-9
    report(1, "exact cone trajectories", ok,
           f"{len(cases)} entries, sup state error {worst_state:.2e}, tau+ error {worst_tau:.2e}")
    assert ok


def test_euclidean_lines():
    rng = np.random.default_rng(102)
    plane = WarpedProduct.build("circle", RadialProfile.euclidean())
    worst_map, worst_len = 0.0, 0.0
    for _ in range(100):
        y0, eta0 = circle_entry(rng, 0.2, 5.0)
        rec = renormalized_length(plane, y0, eta0, "cut-extrapolation")
        dy = np.mod(rec.exit_y[0] - y0[0] - np.pi + np.pi, 2 * np.pi) - np.pi
        worst_map = max(worst_map, abs(dy), abs(rec.exit_eta[0] - eta0[0]))
        worst_len = max(worst_len, abs(rec.length))
    ok = worst_map <= 1e-8 and worst_len <= 1e-6
    report(2, "euclidean plane", ok, f"100 lines, antipodal exit error {worst_map:.2e}, |L| <= {worst_len:.2e}")
    assert ok


def test_renormalized_length_methods():
    rng = np.random.default_rng(103)
    model = WarpedProduct.build("circle", RadialProfile(2.0, 1.0, 2.0))
    worst = 0.0
    trajs = []
    for _ in range(50):
        y0, eta0 = circle_entry(rng, 0.2, 4.0)
        tr = integrate_entry(model, y0, eta0)
        trajs.append((y0, eta0, tr))
        vals = [renormalized_length(model, y0, eta0, m, traj=tr).length
                for m in ("cut-extrapolation", "tau-subtraction", "limit")]
        worst = max(worst, max(vals) - min(vals))
    polys = [[(0.3, [0])], [(0.2, [1], 0.4)], [(0.1, [0]), (0.25, [2], 1.0)]]
    worst_bdf = 0.0
    for terms in polys:
        for y0, eta0, tr in trajs[:10]:
            gap, expected = bdf_change_gap(model, y0, eta0, terms, traj=tr)
            worst_bdf = max(worst_bdf, abs(gap - expected))
    ok = worst <= 1e-6 and worst_bdf <= 1e-6
    report(3, "renormalized length", ok,
           f"50 geodesics, method spread {worst:.2e}; bdf change error {worst_bdf:.2e} (3 functions x 10)")
    assert ok


def test_gauge_kernel():
    rng = np.random.default_rng(104)
    model = PerturbedConic(Circle(), [(1, 0.5, [([(1.0, [0]), (0.5, [1], 0.3)], "h0")])])
    worst, signal = 0.0, 0.0
    t0 = time.time()
    for _ in range(50):
        y0, eta0 = circle_entry(rng, 0.5, 2.5)
        bumps = [CollarBump(rng.uniform(0.3, 0.6), np.array([y0[0] + rng.uniform(0.2, 1.4) * np.sign(eta0[0])]),
                            0.15, 0.8) for _ in range(5)]
        us = [BumpField(b, np.array(rng.normal())) for b in bumps]
        qs = [BumpField(b, rng.normal(size=2)) for b in bumps]
        fields = [sym_derivative(model, u) for u in us] + [sym_derivative(model, q) for q in qs]
        # us[0] itself is carried along to confirm the geodesic meets the supports
        vals, tr = xray_many(model, fields + us[:1], y0, eta0, rtol=1e-11, atol=1e-12)
        assert tr.status == "ok"
        worst = max(worst, float(np.max(np.abs(vals[:10]))))
        signal = max(signal, abs(float(vals[10])))
    elapsed = time.time() - t0
    sphere = PerturbedConic(Sphere(), [(1, 0.4, [([(1.0, [0, 0]), (0.4, [1, 1], 0.2)], "h0")])])
    res_worst = 0.0
    pts = [(r, np.array([1.0, 0.4])) for r in (0.01, 0.05, 0.2)]
    for m in (1, 2):
        for j in range(2):
            terms = {(0,) * m: [(1.0, [j, 1]), (0.3, [1, 0], 0.5)], (1,) * m: [(0.4, [1, 1])]}
            f = CollarField(m, 3, 3, terms)
            res_worst = max(res_worst, gauge_normalize(sphere, f, pts).transversal_max)
    ok = worst <= 1e-7 and res_worst < 1e-8 and signal > 1e-3
    report(4, "gauge kernel", ok,
           f"max |I(du)|, |I(Dq)| = {worst:.2e} over 50 geodesics x 5 potentials ({elapsed:.0f}s); "
           f"gauge residual {res_worst:.2e}")
    assert ok


def test_large_eta_limits():
    circ = PerturbedConic(Circle(), [(1, 0.5, [([(1.0, [0]), (0.5, [1], 0.3)], "h0")])])
    sph = PerturbedConic(Sphere(), [(1, 0.4, [([(1.0, [0, 0]), (0.4, [1, 1], 0.2)], "h0")])])
    eps = [0.08, 0.04, 0.02, 0.01]
    rates = [large_eta_scattering(circ, [y], [1.0], eps)["rate"] for y in (0.3, 2.0)]
    rates += [large_eta_scattering(sph, [1.3, 0.2], [0.3, 1.0], eps)["rate"]]
    cone = ExactCone(Circle())
    const = FunctionField(0, 0, 2, lambda r, y: 1.0)
    lim = boundary_pi_transform(cone, const, [0.3], [1.0], 3, eps)["limit"]
    f = FunctionField(0, 0, 2, lambda r, y: 1.0 + 0.5 * np.cos(y[0]))
    pert = boundary_pi_transform(circ, f, [0.3], [1.0], 3, eps)
    ok = min(rates) >= 0.9 and abs(lim - 2.0) <= 1e-4 and pert["gap"] <= 1e-4 and pert["rate"] >= 0.9
    report(5, "large |eta| limits", ok,
           f"scattering rates {', '.join(f'{r:.2f}' for r in rates)}; cone pi-transform {lim:.8f}; "
           f"perturbed gap {pert['gap']:.1e} at rate {pert['rate']:.2f}")
    assert ok


def test_curvature_decay():
    rhos = np.geomspace(1e-3, 2e-2, 8)
    tor = PerturbedConic(Torus((2 * np.pi, 2 * np.pi)), [(1, 0.3, [([(1.0, [1, 0])], "h0")])])
    sph = PerturbedConic(Sphere(), [(1, 0.3, [([(1.0, [1, 1])], "h0")])])
    ys_t = [np.array([0.3, 0.7]), np.array([1.9, 2.2])]
    ys_s = [np.array([1.0, 0.7]), np.array([2.0, 2.2])]
    r_t = curvature_decay_rates(tor, rhos, ys_t)
    r_s = curvature_decay_rates(sph, rhos, ys_s)
    ok = (r_t["K_VW"] >= 1.9 and r_t["K_ZV"] >= 3.9 and r_t["R_VWWZ"] >= 2.9
          and r_s["K_ZV"] >= 3.9 and r_s["R_VWWZ"] >= 2.9 and r_s["K_VW"] >= 2.9)
    report(6, "curvature decay", ok,
           f"torus K_VW {r_t['K_VW']:.2f} K_ZV {r_t['K_ZV']:.2f} R_VWWZ {r_t['R_VWWZ']:.2f}; "
           f"unit sphere K_VW {r_s['K_VW']:.2f}")
    assert ok


def test_conjugate_points():
    rng = np.random.default_rng(107)
    convex = WarpedProduct.build("circle", RadialProfile(2.0, 1.0, 2.0))
    found = 0
    for _ in range(200):
        y0, eta0 = circle_entry(rng, 0.2, 4.0)
        tr = integrate_entry(convex, y0, eta0)
        times, _ = conjugate_scan(convex, tr, rho_window=0.05, rtol=1e-9, atol=1e-10, samples=1000)
        found += len(times)
    prof = RadialProfile(0.5, 1.0, 3.0)
    capped = WarpedProduct.build("circle", prof)
    crossing, with_conj, worst = 0, 0, 0.0
    mismatched = 0
    while crossing < 30:
        y0, eta0 = circle_entry(rng, 0.1, 1.4)
        tr = integrate_entry(capped, y0, eta0)
        rho_max = max(tr.rho(t) for t in tr.turning) if tr.turning.size else 0.0
        if rho_max <= 0.5:  # stays outside r = 2
            continue
        crossing += 1
        times, jf = conjugate_scan(capped, tr, rho_window=0.05)
        oracle = scalar_jacobi_times(tr, lambda r: prof.gauss(1 / r), (jf.tau0, jf.tau1))
        if times:
            with_conj += 1
        if len(times) != len(oracle):
            mismatched += 1
        elif times:
            worst = max(worst, float(np.max(np.abs(np.subtract(times, oracle)))))
    frac = with_conj / crossing
    ok = found == 0 and frac >= 0.9 and mismatched == 0 and worst <= 1e-6
    report(7, "conjugate points", ok,
           f"{found} on 200 convex geodesics; {with_conj}/{crossing} cap crossings have one, "
           f"scalar oracle gap {worst:.1e}, count mismatches {mismatched}")
    assert ok


def test_lens_variation_constant():
    rng = np.random.default_rng(108)
    cone = ExactCone(Circle())
    bumps = [TensorBump(CollarBump(0.45, np.array([0.0]), 0.15, 0.8), "g", reference=cone),
             TensorBump(CollarBump(0.35, np.array([2.0]), 0.1, 0.6), "g", reference=cone),
             TensorBump(CollarBump(0.5, np.array([4.0]), 0.12, 0.7), np.array([[0.3, 0.1], [0.1, 1.0]]),
                        reference=cone)]
    d, i2 = [], []
    for q in bumps:
        c = q.bump.y_c[0]
        for _ in range(10):
            eta = rng.uniform(0.9, 1.6) * rng.choice([-1, 1])
            y0 = c - np.sign(eta) * rng.uniform(0.2, 0.9)
            res = lens_variation(cone, q, [y0], [eta])
            assert res.status == "ok"
            d.append(res.derivative)
            i2.append(res.i2)
    d, i2 = np.array(d), np.array(i2)
    # fit on the first configuration, assert on the other 29
    kappa = float(d[0] / i2[0])
    resid = np.abs(d[1:] - kappa * i2[1:])
    ok = bool(np.all(resid <= np.maximum(1e-5, 1e-4 * np.abs(i2[1:])))) and np.max(np.abs(i2)) > 1e-2
    report(8, "lens variation", ok,
           f"kappa = {kappa:.7f} (first run), max residual {resid.max():.1e} on 29 others, "
           f"max |I2| {np.abs(i2).max():.3f}")
    assert ok


def test_linearized_difference():
    worst = 0.0
    for b, y0, eta0 in ((Circle(), [0.3], [1.0]), (Sphere(), [1.2, 0.3], [0.3, 1.0])):
        d = b.d
        one = [(1.0, [0] * d), (0.5, [1] * d, 0.3)]
        for m in (1, 2):
            g = PerturbedConic(b, [(m, 0.3, [(TrigPoly.make(one), "h0")])])
            res = linearized_difference(g, ExactCone(b), y0, eta0, m)
            worst = max(worst, res["relative_gap"])
    a = 0.3
    g = PerturbedConic(Sphere(), [(2, a, [(TrigPoly.make([(1.0, [0, 0])]), "h0")])])
    diff = DualJetDifference(g, ExactCone(Sphere()), 2)
    # T_2 = -a h0^-1, so dividing by -a gives the T_2 = h0 value
    val = perturbative_identities(diff, [1.2, 0.3], [0.3, 1.0])["equdirectionH0"] / (-a)
    ok = worst <= 1e-4 and abs(val + np.pi / 4) <= 1e-8
    report(9, "linearized difference", ok,
           f"Duhamel vs finite differences relative gap {worst:.1e} (m = 1, 2 on circle and sphere); "
           f"direction identity {val:.10f} vs -pi/4")
    assert ok


def test_hygiene():
    rng = np.random.default_rng(110)
    circ = PerturbedConic(Circle(), [(1, 0.5, [([(1.0, [0]), (0.5, [1], 0.3)], "h0")])])
    sph = PerturbedConic(Sphere(), [(1, 0.4, [([(1.0, [0, 0]), (0.4, [1, 1], 0.2)], "h0")])])
    warped = WarpedProduct.build("circle", RadialProfile(2.0, 1.0, 2.0))
    drift, comp, rev = 0.0, 0.0, 0.0
    for i in range(60):
        if i % 3 == 2:
            model, (y0, eta0) = sph, sphere_entry(rng, 0.3, 4.0)
        else:
            model, (y0, eta0) = (circ if i % 3 else warped), circle_entry(rng, 0.3, 4.0)
        tr = integrate_entry(model, y0, eta0)
        drift = max(drift, tr.drift_per_tau())
        if i % 4 == 0:
            t1 = rng.uniform(0.2, 0.5) * tr.tau_plus
            t2 = rng.uniform(0.1, 0.4) * tr.tau_plus
            later = integrate(model, tr.state(t1), tau_stop=t2)
            comp = max(comp, float(np.max(np.abs(later.z_end - tr.state(t1 + t2)))))
            y1, eta1 = scattering_map(model, y0, eta0, tr)
            y2, eta2 = scattering_map(model, y1, -eta1)
            rev = max(rev, float(np.max(np.abs(model.boundary.difference(y2, y0)))),
                      float(np.max(np.abs(eta2 + eta0))))
    samples = outgoing_samples(circ, 0.1, 250, rng)
    b1 = asymptotic_bounds_check(circ, samples)
    b2 = asymptotic_bounds_check(sph, outgoing_samples(sph, 0.1, 250, rng))
    lower_ok = b1["lower_bound_ok"] and b2["lower_bound_ok"] and b1["trapped"] + b2["trapped"] == 0
    ok = drift <= 1e-9 and comp <= 1e-8 and rev <= 1e-8 and lower_ok
    report(10, "numerical hygiene", ok,
           f"drift {drift:.1e} per unit tau; composition {comp:.1e}; reversal {rev:.1e}; "
           f"500 outgoing samples, worst lower-bound margin "
           f"{min(b1['lower_bound_margin'], b2['lower_bound_margin']):.1e}")
    assert ok
