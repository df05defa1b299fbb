"""Jacobi fields along geodesics, conjugate points and growth bounds.

Everything is integrated in rescaled time tau jointly with the trajectory:
the parallel frame obeys dE/dtau = -Gamma(dx/dtau, E), which is regular,
while the Jacobi system picks up the factor rho^-2 from dt = rho^-2 dtau.
That factor blows up at the boundary, so Jacobi fields live on a window
{rho >= rho_window} of the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .dynamics import Trajectory, rescaled_field
from .geometry import ConicMetric, christoffel_and_riemann, coordinate_jet

RTOL = 1e-11
ATOL = 1e-12


def _christoffel_and_curvature(model, rho, y):
    g, dg, ddg = coordinate_jet(model, rho, y)
    gam, T = christoffel_and_riemann(g, dg, ddg)
    return g, gam, T


def window_times(tr: Trajectory, rho_window):
    """First and last tau with rho >= rho_window (None if never reached)."""
    taus = np.linspace(0.0, tr.tau_end, 2001)
    rho = np.array([tr.rho(t) for t in taus]) - rho_window
    idx = np.flatnonzero(rho >= 0)
    if idx.size == 0:
        return None
    i0, i1 = idx[0], idx[-1]
    f = lambda t: tr.rho(t) - rho_window
    a = taus[0] if i0 == 0 else brentq(f, taus[i0 - 1], taus[i0], xtol=1e-14)
    b = taus[-1] if i1 == taus.size - 1 else brentq(f, taus[i1], taus[i1 + 1], xtol=1e-14)
    return a, b


def _velocity(model, z):
    """Coordinate velocity dx/dt of the unit-speed geodesic through z."""
    d = model.d
    v = rescaled_field(model, z)
    rho = z[0]
    return rho * rho * v[: d + 1]


def _initial_frame(model, z):
    """Orthonormal frame {gamma', Y_1, ...} in coordinate components."""
    n = model.n
    rho, y = z[0], z[1 : n]
    g = coordinate_jet(model, rho, y)[0]
    vel = _velocity(model, z)
    vecs = [vel / np.sqrt(vel @ g @ vel)]
    for e in np.eye(n):
        w = e.copy()
        for u in vecs:
            w = w - (u @ g @ w) * u
        nw = np.sqrt(w @ g @ w)
        if nw > 1e-8 * np.sqrt(e @ g @ e):
            vecs.append(w / nw)
        if len(vecs) == n:
            break
    return np.array(vecs).T


@dataclass
class JacobiField:
    """Jacobi solutions in a parallel orthonormal frame along a geodesic.

    ``U(t)`` and ``Udot(t)`` have shape (n, k): column j is the j-th
    solution, row 0 the component along the velocity.
    """

    model: ConicMetric
    trajectory: Trajectory
    tau0: float
    tau1: float
    sol: object
    n: int
    k: int
    frame_drift: float
    t_end: float
    nfev: int = 0
    times: np.ndarray = field(default=None, repr=False)

    def _unpack(self, w):
        n, k = self.n, self.k
        o = 2 * n
        E = w[o : o + n * n].reshape(n, n)
        o += n * n
        U = w[o : o + n * k].reshape(n, k)
        o += n * k
        Ud = w[o : o + n * k].reshape(n, k)
        return w[: 2 * n], E, U, Ud, w[-1]

    def at_tau(self, tau):
        z, E, U, Ud, t = self._unpack(self.sol(tau))
        return z, E, U, Ud, t

    def tau_of_t(self, t):
        return brentq(lambda s: self.at_tau(s)[4] - t, self.tau0, self.tau1, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def U(self, t):
        return self.at_tau(self.tau_of_t(t))[2]

    def Udot(self, t):
        return self.at_tau(self.tau_of_t(t))[3]

    def curvature_operator(self, tau):
        z, E, _, _, _ = self.at_tau(tau)
        return _curvature_matrix(self.model, z, E)

    def residual(self, t, h=1e-3):
        """max |U'' + R U| at time t, with U'' from central differences of U."""
        taus = [self.tau_of_t(t + c * h) for c in (-2, -1, 0, 1, 2)]
        Us = [self.at_tau(s)[2] for s in taus]
        udd = (-Us[0] + 16 * Us[1] - 30 * Us[2] + 16 * Us[3] - Us[4]) / (12 * h * h)
        z, E, U, _, _ = self.at_tau(taus[2])
        R = _curvature_matrix(self.model, z, E)
        return float(np.max(np.abs(udd + R @ U)))


def _curvature_matrix(model, z, E):
    n = model.n
    rho, y = z[0], z[1:n]
    _, _, T = _christoffel_and_curvature(model, rho, y)
    vel = E[:, 0]
    R = E.T @ np.einsum("abcd,b,d->ac", T, vel, vel) @ E
    return 0.5 * (R + R.T)


def _rhs_block(model, tau, w, n, k):
    d = n - 1
    zlen = 2 * n
    z = w[:zlen]
    o = zlen
    E = w[o : o + n * n].reshape(n, n)
    o += n * n
    U = w[o : o + n * k].reshape(n, k)
    o += n * k
    Ud = w[o : o + n * k].reshape(n, k)
    rho, y = z[0], z[1 : 1 + d]
    fz = rescaled_field(model, z)
    _, gam, T = _christoffel_and_curvature(model, rho, y)
    xdot = fz[: d + 1]
    dE = -np.einsum("abc,b,cj->aj", gam, xdot, E)
    vel = E[:, 0]
    R = E.T @ np.einsum("abcd,b,d->ac", T, vel, vel) @ E
    R = 0.5 * (R + R.T)
    s = rho ** -2
    return np.concatenate([fz, dE.ravel(), (s * Ud).ravel(), (-s * (R @ U)).ravel(), [s]])


def jacobi_integrate(model: ConicMetric, tr: Trajectory, J0, Jdot0, rho_window=1e-2,
                     tau_range=None, rtol=RTOL, atol=ATOL):
    """Integrate Jacobi fields along ``tr`` between the window crossings.

    ``J0`` and ``Jdot0`` are frame components (shape (n,) or (n, k)) at the
    window entry: index 0 along the velocity, the rest along the parallel
    orthonormal complement. Time t is measured from the window entry.
    """
    n = model.n
    J0 = np.asarray(J0, float)
    Jdot0 = np.asarray(Jdot0, float)
    if J0.ndim == 1:
        J0, Jdot0 = J0[:, None], Jdot0[:, None]
    if J0.shape != Jdot0.shape or J0.shape[0] != n:
        raise ValueError("initial data must have n rows")
    k = J0.shape[1]
    if tau_range is None:
        tau_range = window_times(tr, rho_window)
        if tau_range is None:
            raise ValueError("trajectory never enters the window")
    a, b = tau_range
    z0 = tr.state(a)[: 2 * n]
    E0 = _initial_frame(model, z0)
    w0 = np.concatenate([z0, E0.ravel(), J0.ravel(), Jdot0.ravel(), [0.0]])
    res = solve_ivp(lambda t, w: _rhs_block(model, t, w, n, k), (a, b), w0,
                    method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if not res.success:
        raise RuntimeError(res.message)
    drift = 0.0
    for i in range(0, res.t.size, max(1, res.t.size // 50)):
        w = res.y[:, i]
        z = w[: 2 * n]
        E = w[2 * n : 2 * n + n * n].reshape(n, n)
        g = coordinate_jet(model, z[0], z[1:n])[0]
        drift = max(drift, float(np.max(np.abs(E.T @ g @ E - np.eye(n)))))
    return JacobiField(model, tr, a, b, res.sol, n, k, drift, float(res.y[-1, -1]),
                       nfev=res.nfev, times=res.t)


def wronskian(jf: JacobiField, tau, i, j):
    _, _, U, Ud, _ = jf.at_tau(tau)
    return float(U[:, i] @ Ud[:, j] - Ud[:, i] @ U[:, j])


def _normal_det(jf: JacobiField, tau):
    _, _, U, _, _ = jf.at_tau(tau)
    return float(np.linalg.det(U[1:, 1:]))


def conjugate_scan(model: ConicMetric, tr: Trajectory, rho_window=1e-2, samples=4000,
                   xtol=1e-10, rtol=RTOL, atol=ATOL):
    """Times t (from the window entry) where J(0)=0, J'(0)=Id degenerates.

    Only the normal block matters; its determinant is scanned for sign
    changes on a fine tau grid and each root is refined in t.
    """
    if model.n not in (2, 3):
        raise ValueError("conjugate scan supports n = 2 or 3")
    n = model.n
    jf = jacobi_integrate(model, tr, np.zeros((n, n)), np.eye(n), rho_window=rho_window,
                          rtol=rtol, atol=atol)
    taus = np.linspace(jf.tau0, jf.tau1, samples)[1:]
    dets = np.array([_normal_det(jf, t) for t in taus])
    times = []
    for i in np.flatnonzero(np.sign(dets[:-1]) * np.sign(dets[1:]) < 0):
        tau = brentq(lambda s: _normal_det(jf, s), taus[i], taus[i + 1], xtol=1e-15)
        times.append(jf.at_tau(tau)[4])
    # refine in t, where the tolerance is stated
    out = []
    for t in times:
        lo, hi = t - 1e-6 * (1 + t), t + 1e-6 * (1 + t)
        try:
            t = brentq(lambda s: _normal_det(jf, jf.tau_of_t(s)), lo, hi, xtol=xtol)
        except ValueError:
            pass
        out.append(float(t))
    return out, jf


def scalar_jacobi_times(tr: Trajectory, gauss, tau_range, samples=4000):
    """Conjugate times of u'' + K u = 0, u(0)=0, u'(0)=1 (surfaces only).

    ``gauss(rho)`` is the Gaussian curvature at radius 1/rho. Independent of
    the frame machinery: it only uses rho along the trajectory.
    """
    a, b = tau_range

    def rhs(tau, w):
        rho = tr.rho(tau)
        s = rho ** -2
        return [s * w[1], -s * gauss(rho) * w[0], s]

    res = solve_ivp(rhs, (a, b), [0.0, 1.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-13,
                    dense_output=True)
    taus = np.linspace(a, b, samples)[1:]
    u = res.sol(taus)[0]
    out = []
    for i in np.flatnonzero(np.sign(u[:-1]) * np.sign(u[1:]) < 0):
        tau = brentq(lambda s: res.sol(s)[0], taus[i], taus[i + 1], xtol=1e-15)
        out.append(float(res.sol(tau)[2]))
    return out


@dataclass
class GrowthReport:
    C_derivative: float
    C_position: float
    samples: int
    ok: bool
    ratios: list = field(default_factory=list)


def jacobi_growth_check(model: ConicMetric, trajs, rng, rho_window=1e-2, n_t=40, bound=None):
    """Fit the constants in the affine growth envelope of Jacobi fields.

    For each outgoing trajectory random normal initial data are drawn at the
    window entry; the ratios
      |J'(t)| / (|J(0)| rho0^3 + |J'(0)|)
      (|J(t)| - |J(0)|) / ((|J(0)| rho0^3 + |J'(0)|) t)
    are maximised over the sampled times. ``bound`` (if given) is the
    largest acceptable constant.
    """
    n = model.n
    c1 = c2 = 0.0
    ratios = []
    for tr in trajs:
        J0 = np.zeros(n)
        Jd0 = np.zeros(n)
        J0[1:] = rng.normal(size=n - 1)
        Jd0[1:] = rng.normal(size=n - 1) * rng.uniform(0, 1)
        z0 = tr.state(0.0)
        rho0 = z0[0]
        jf = jacobi_integrate(model, tr, J0, Jd0, tau_range=(0.0, window_times(tr, rho_window)[1]))
        scale = np.linalg.norm(J0) * rho0**3 + np.linalg.norm(Jd0)
        for tau in np.linspace(jf.tau0, jf.tau1, n_t)[1:]:
            _, _, U, Ud, t = jf.at_tau(tau)
            r1 = np.linalg.norm(Ud) / scale
            r2 = (np.linalg.norm(U) - np.linalg.norm(J0)) / (scale * t)
            c1, c2 = max(c1, r1), max(c2, r2)
        ratios.append((c1, c2))
    ok = bound is None or (c1 <= bound and c2 <= bound)
    return GrowthReport(float(c1), float(c2), len(trajs), bool(ok), ratios)
