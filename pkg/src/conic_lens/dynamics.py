"""Rescaled geodesic flow on the compactified cosphere bundle.

Phase points are stored as flat arrays z = (rho, y, xi, eta) where xi is the
compactified radial momentum and eta the boundary momentum. The flow is the
Hamilton flow of g reparametrized by d tau = rho^2 dt, which is smooth up to
rho = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import OdeSolution, solve_ivp

from .boundary import Boundary
from .geometry import ConicMetric

RTOL = 1e-12
ATOL = 1e-13
TAU_MAX = 1e3
RHO_MIN_INTERIOR = 1e-6


def split(z, d):
    z = np.asarray(z, float)
    return z[0], z[1:1 + d], z[1 + d], z[2 + d:2 + 2 * d]


def pack(rho, y, xi, eta):
    return np.concatenate([[rho], np.atleast_1d(y), [xi], np.atleast_1d(eta)])


def entry_point(y0, eta0):
    """Phase point on the incoming face: rho = 0, xi = +1."""
    return pack(0.0, y0, 1.0, eta0)


def _field_parts(model: ConicMetric, z):
    """Rescaled field plus the speed functional p^T A p and d rho / d tau."""
    d = model.d
    rho, y, xi, eta = split(z, d)
    if model.is_normal_at(rho):
        h, dh, _ = model.h_jet(rho, y, order=1)
        if d == 1:
            hi = 1.0 / h[0, 0]
            u = eta * hi
            E = eta[0] * u[0]
            dE = -(u[0] ** 2) * dh[:, 0, 0]
        else:
            hinv = np.linalg.inv(h)
            u = hinv @ eta
            E = eta @ u
            dE = -np.einsum("i,kij,j->k", u, dh, u)
        out = np.empty(2 * d + 2)
        out[0] = xi
        out[1:1 + d] = u
        out[1 + d] = -rho * E - 0.5 * rho * rho * dE[0]
        out[2 + d:] = -0.5 * dE[1:]
        speed = xi * xi + rho * rho * E
        return out, speed, E
    G, dG, _ = model.frame_jet(rho, y, order=1)
    A = np.linalg.inv(G)
    dA = -np.einsum("ab,kbc,cd->kad", A, dG, A)
    p = np.concatenate([[xi], rho * eta])
    Ap = A @ p
    quad = np.einsum("a,kab,b->k", p, dA, p)
    out = np.empty(2 * d + 2)
    out[0] = Ap[0]
    out[1:1 + d] = Ap[1:] / rho
    out[1 + d] = -Ap[1:] @ eta - 0.5 * quad[0]
    out[2 + d:] = -0.5 * quad[1:] / (rho * rho)
    return out, p @ Ap, None


def rescaled_field(model: ConicMetric, z):
    """(d rho, dy, d xi, d eta)/d tau at the phase point z."""
    return _field_parts(model, z)[0]


def constraint(model: ConicMetric, z):
    """xi^2 + rho^2 |eta|^2 in normal form, p^T A p in general; equals 1 on shell."""
    return _field_parts(model, z)[1]


def length_density(model, z, f=None):
    """(1 - |d rho/d tau|)/rho^2, written so that it stays finite at rho = 0."""
    f, speed, E = _field_parts(model, z) if f is None else f
    rho = z[0]
    if E is not None:
        return E / (1.0 + abs(z[1 + model.d]))
    return (1.0 - abs(f[0])) / (rho * rho)


def normalize(model: ConicMetric, z):
    """Rescale the covector part of z onto the unit cosphere."""
    z = np.array(z, float)
    d = model.d
    c = constraint(model, z)
    z[1 + d:] /= np.sqrt(c)
    return z


@dataclass
class _Solution:
    t: np.ndarray
    y: np.ndarray
    sol: OdeSolution


@dataclass
class Trajectory:
    """Dense integral curve of the rescaled field.

    ``state(tau)`` evaluates the phase point, ``acc(tau)`` the accumulators.
    Accumulator 0 is the regular part of the arclength (see
    ``length_density``), accumulator 1 the integral of 1 - |d rho/d tau|;
    user integrands follow.
    """

    model: ConicMetric
    z0: np.ndarray
    direction: int
    tau_end: float
    status: str
    sol: object
    n_state: int
    drift: float
    turning: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nfev: int = 0

    @property
    def tau_plus(self):
        if self.status != "ok":
            return np.inf * self.direction
        return self.tau_end

    def state(self, tau):
        return self.sol.sol(tau)[: self.n_state]

    def acc(self, tau):
        return self.sol.sol(tau)[self.n_state:]

    @property
    def z_end(self):
        return self.sol.y[: self.n_state, -1]

    @property
    def acc_end(self):
        return self.sol.y[self.n_state:, -1]

    def rho(self, tau):
        return self.sol.sol(tau)[0]

    def drift_per_tau(self):
        return self.drift / max(1.0, abs(self.tau_end))


def integrate(
    model: ConicMetric,
    z0,
    direction=1,
    integrands=(),
    tau_max=TAU_MAX,
    rho_min_interior=RHO_MIN_INTERIOR,
    rtol=RTOL,
    atol=ATOL,
    stop_at_boundary=True,
    tau_stop=None,
):
    """Integrate the rescaled flow from z0 until the phase point reaches rho = 0.

    integrands: callables (z, field) -> float integrated along as extra state.
    direction=-1 integrates backward in tau. If ``tau_stop`` is given the
    integration ends there instead (boundary arrival still terminates).
    """
    d = model.d
    z0 = np.asarray(z0, float)
    ns = z0.size
    integrands = tuple(integrands)

    def rhs(tau, w):
        z = w[:ns]
        f, speed, E = _field_parts(model, z)
        out = np.empty(w.size)
        out[:ns] = f
        rho = z[0]
        if E is not None:
            out[ns] = E / (1.0 + abs(z[1 + d]))
            out[ns + 1] = rho * rho * out[ns]
        else:
            out[ns + 1] = 1.0 - abs(f[0])
            out[ns] = out[ns + 1] / (rho * rho)
        for i, g in enumerate(integrands):
            out[ns + 2 + i] = g(z, f)
        return out

    def exit_event(tau, w):
        return w[0]

    exit_event.terminal = True
    exit_event.direction = -1

    def rho_rate(w):
        z = w[:ns]
        if model.is_normal_at(z[0]):
            return z[1 + d]
        return _field_parts(model, z)[0][0]

    def turn_event(tau, w):
        return rho_rate(w)

    turn_event.terminal = True

    w = np.concatenate([z0, np.zeros(2 + len(integrands))])
    span_end = direction * (tau_max if tau_stop is None else abs(tau_stop))
    tau = 0.0
    ts, interps, ys, tsteps = [0.0], [], [w[:, None]], [0.0]
    turning = []
    nfev = 0
    status = "trapped" if tau_stop is None else "stopped"
    # segments end at turning points of rho so every integrand stays smooth
    rate = rho_rate(w)
    sign = np.sign(rate) if rate != 0 else np.sign(rhs(0.0, w)[1 + d]) * direction
    while True:
        # g = d rho/d tau currently has sign `sign`; the next turn flips it
        turn_event.direction = -sign
        events = [exit_event, turn_event] if stop_at_boundary else [turn_event]
        sol = solve_ivp(rhs, (tau, span_end), w, method="DOP853", rtol=rtol, atol=atol,
                        events=events, dense_output=True)
        nfev += sol.nfev
        ts.extend(sol.sol.ts[1:])
        interps.extend(sol.sol.interpolants)
        ys.append(sol.y[:, 1:])
        tsteps.extend(sol.t[1:])
        if not sol.success:
            status = "failed"
            break
        if sol.status != 1:
            break
        hit_exit = stop_at_boundary and sol.t_events[0].size > 0
        if hit_exit:
            status = "ok"
            break
        tau = sol.t[-1]
        w = sol.y[:, -1].copy()
        turning.append(tau)
        sign = -sign
        if w[0] < rho_min_interior:
            status = "trapped"
            break
    dense = OdeSolution(np.array(ts), interps)
    yall = np.concatenate(ys, axis=1)
    tau_end = tsteps[-1]
    if status == "ok":
        yall[0, -1] = 0.0
    drift = 0.0
    for k in range(yall.shape[1]):
        drift = max(drift, abs(constraint(model, yall[:ns, k]) - 1.0))
    res = _Solution(np.array(tsteps), yall, dense)
    turning = np.array(turning, float)
    return Trajectory(model, z0, direction, tau_end, status, res, ns, drift, turning, nfev)


def integrate_entry(model, y0, eta0, **kw):
    return integrate(model, entry_point(y0, eta0), **kw)


# ---------------------------------------------------------------------------
# closed-form oracles


def boundary_flow(boundary: Boundary, y, eta, s):
    """Exact geodesic flow e^{sH0} of |eta|^2/2 on the boundary."""
    return boundary.flow(np.atleast_1d(y), np.atleast_1d(eta), s)


def cone_solution(boundary: Boundary, y0, eta0, tau):
    """Exact trajectory of the cone over the boundary from the entry (y0, eta0)."""
    e = boundary.norm(y0, eta0)
    y, eta = boundary.flow(np.atleast_1d(y0), np.atleast_1d(eta0), tau)
    return pack(np.sin(tau * e) / e, y, np.cos(tau * e), eta)


# ---------------------------------------------------------------------------
# asymptotic diagnostics


def asymptotic_bounds_check(model: ConicMetric, samples, t_max=200.0, n_grid=600):
    """Check rho(t) >= rho0/(1 + rho0 t) along outgoing samples.

    Times t are unrescaled; they come from the regular length accumulator
    plus the variation of 1/rho, so nothing diverges at the exit. Returns a dict with the worst lower-bound
    margin, fitted constants for |eta| drift, and the decay slope of
    1 - xi^2 against 1 + rho0 t.
    """
    d = model.d
    worst = np.inf
    c_eta = 0.0
    slopes = []
    trapped = 0
    for z in samples:
        z = np.asarray(z, float)
        rho0 = z[0]
        tr = integrate(model, z)
        if tr.status != "ok":
            trapped += 1
            continue
        # t(tau) on a grid short of the exit, where t is finite; turning
        # points are grid nodes so 1/rho is monotone between nodes
        taus = np.union1d(np.linspace(0.0, tr.tau_end, n_grid)[:-1], tr.turning)
        W = tr.sol.sol(taus)
        inv = 1.0 / W[0]
        ts = W[tr.n_state] - W[tr.n_state, 0] + np.concatenate([[0.0], np.cumsum(np.abs(np.diff(inv)))])
        keep = ts <= t_max
        taus, ts = taus[keep], ts[keep]
        states = W[: tr.n_state, keep].T
        rhos = states[:, 0]
        bound = rho0 / (1 + rho0 * ts)
        worst = min(worst, float(np.min((rhos - bound) / bound)))
        e0 = model.boundary.norm(z[1:1 + d], z[2 + d:])
        if e0 > 0:
            es = np.array([np.sqrt(max(s[2 + d:] @ np.linalg.solve(model.h_jet(s[0], s[1:1 + d])[0], s[2 + d:]), 0.0))
                           for s in states])
            ratio = np.abs(np.log(es / np.sqrt(z[2 + d:] @ np.linalg.solve(model.h_jet(rho0, z[1:1 + d])[0], z[2 + d:]))))
            c_eta = max(c_eta, float(np.max(ratio)) / rho0)
        one_minus = 1 - states[:, 1 + d] ** 2
        late = (ts > 0.2 * ts[-1]) & (one_minus > 1e-14)
        if late.sum() > 5:
            slopes.append(np.polyfit(np.log1p(rho0 * ts[late]), np.log(one_minus[late]), 1)[0])
    return {
        "lower_bound_margin": worst,
        "lower_bound_ok": bool(worst >= -1e-8),
        "C_eta": c_eta,
        "xi_decay_slope": float(np.max(slopes)) if slopes else None,
        "trapped": trapped,
    }


def outgoing_samples(model: ConicMetric, eps, count, rng):
    """Random phase points in {rho <= eps, xi <= 0} on the unit cosphere."""
    d = model.d
    out = []
    for _ in range(count):
        rho = eps * rng.uniform(0.05, 1.0)
        y = rng.uniform(0.3, 2.8, size=d) if d == 2 else rng.uniform(0, 2 * np.pi, size=d)
        xi = -rng.uniform(0.05, 1.0)
        direction = rng.normal(size=d)
        h = model.h_jet(rho, y)[0]
        nrm = np.sqrt(direction @ np.linalg.solve(h, direction))
        eta = direction / nrm * np.sqrt(1 - xi * xi) / rho
        out.append(pack(rho, y, xi, eta))
    return out


def tilde_dynamic_check(model: ConicMetric, y0, eta0, eps_seq, n_grid=400):
    """Compare the rescaled trajectory from (y0, eta0/eps) with the sine model.

    Returns residual sups per eps, their fitted slopes in eps and the values
    eps^-1 tau_plus - pi.
    """
    d = model.d
    e0 = model.boundary.norm(y0, eta0)
    eta0 = np.atleast_1d(eta0) / e0
    rho_res, xi_res, tau_gap, sup_rho = [], [], [], []
    for eps in eps_seq:
        tr = integrate_entry(model, y0, eta0 / eps)
        tp = tr.tau_plus
        s = np.linspace(0.0, tp / eps, n_grid)
        states = np.array([tr.state(eps * v) for v in s])
        rt = states[:, 0] / eps
        xt = states[:, 1 + d]
        phase = eps * np.pi * s / tp
        rho_res.append(float(np.max(np.abs(rt - tp / (eps * np.pi) * np.sin(phase)))))
        xi_res.append(float(np.max(np.abs(xt - np.cos(phase)))))
        tau_gap.append(tp / eps - np.pi)
        sup_rho.append(float(np.max(states[:, 0])) / eps)

    def slope(v):
        v = np.abs(np.asarray(v))
        if np.all(v < 1e-13):
            return np.inf
        return float(np.polyfit(np.log(eps_seq), np.log(np.maximum(v, 1e-300)), 1)[0])

    return {
        "eps": list(map(float, eps_seq)),
        "rho_residual": rho_res,
        "xi_residual": xi_res,
        "tau_gap": tau_gap,
        "rho_slope": slope(rho_res),
        "xi_slope": slope(xi_res),
        "tau_slope": slope(tau_gap),
        "C_sup_rho": max(sup_rho),
    }


# ---------------------------------------------------------------------------
# linearized difference of two models near the boundary


class DualJetDifference:
    """T(y) = difference of the rho^m coefficients of h_rho^{-1} for two models.

    Built for pairs of PerturbedConic models sharing the boundary and all
    terms of order below m. Evaluates the quadratic form T(y, eta) and the
    Hamilton field of T/2.
    """

    def __init__(self, g, gp, m):
        from .geometry import ExactCone, PerturbedConic

        def terms(model):
            if isinstance(model, ExactCone):
                return []
            if isinstance(model, PerturbedConic):
                return model.terms
            raise TypeError("jet differences need PerturbedConic or ExactCone models")

        tg, tp = terms(g), terms(gp)
        if type(g.boundary) is not type(gp.boundary) or g.d != gp.d:
            raise ValueError("models must share the boundary")
        self.boundary, self.m, self.d = g.boundary, int(m), g.d

        lo_g = [(t[0], t[1], t[2]) for t in tg if t[0] < m]
        lo_p = [(t[0], t[1], t[2]) for t in tp if t[0] < m]
        if not _same_terms(lo_g, lo_p):
            raise ValueError(f"jets differ below order {m}")
        self.plus = [(a, f) for k, a, f in tg if k == m]
        self.minus = [(a, f) for k, a, f in tp if k == m]

    def jet(self, y):
        """T (d x d) and dT[k] = d_{y_k} T."""
        d = self.d
        dP = np.zeros((d, d))
        ddP = np.zeros((d, d, d))
        for sign, group in ((1.0, self.plus), (-1.0, self.minus)):
            for a, f in group:
                P, dPf, _ = f.jet(y)
                dP += sign * a * P
                ddP += sign * a * dPf
        h, dh, _ = self.boundary.metric_jet(y)
        hi = np.linalg.inv(h)
        dhi = -np.einsum("ab,kbc,cd->kad", hi, dh, hi)
        T = -hi @ dP @ hi
        dT = -(np.einsum("kab,bc,cd->kad", dhi, dP, hi) + np.einsum("ab,kbc,cd->kad", hi, ddP, hi)
               + np.einsum("ab,bc,kcd->kad", hi, dP, dhi))
        return T, dT

    def form(self, y, eta):
        T, _ = self.jet(y)
        return float(eta @ T @ eta)

    def hamilton(self, y, eta):
        """(dy, deta) of the Hamilton field of T(eta, eta)/2."""
        T, dT = self.jet(y)
        return T @ eta, -0.5 * np.einsum("a,kab,b->k", eta, dT, eta)

    def h0_derivative(self, y, eta):
        """H0 T: derivative of T along the boundary geodesic flow."""
        T, dT = self.jet(y)
        h, dh, _ = self.boundary.metric_jet(y)
        u = np.linalg.solve(h, eta)
        dE = -np.einsum("a,kab,b->k", u, dh, u)
        return float(np.einsum("a,kab,b,k->", eta, dT, eta, u) + (2 * T @ eta) @ (-0.5 * dE))


def _same_terms(a, b):
    if len(a) != len(b):
        return False
    for (ka, aa, fa), (kb, ab, fb) in zip(sorted(a, key=lambda t: t[:2]), sorted(b, key=lambda t: t[:2])):
        if ka != kb or aa != ab or fa is not fb:
            return False
    return True


def tilde_state(model: ConicMetric, y0, eta0, eps, s_end=np.pi, rtol=1e-13, atol=1e-14):
    """Tilde dynamic at scale eps: returns (rho~, xi~, y~, eta~) at s = s_end.

    rho~ = rho/eps, eta~ = eps eta and s = tau/eps, started on the incoming
    face at (y0, eta0/eps) with |eta0| = 1.
    """
    d = model.d

    def rhs(s, w):
        z = np.empty(2 * d + 2)
        z[0] = eps * w[0]
        z[1:1 + d] = w[1:1 + d]
        z[1 + d] = w[1 + d]
        z[2 + d:] = w[2 + d:] / eps
        f = rescaled_field(model, z)
        out = np.empty_like(w)
        out[0] = f[0]
        out[1:2 + d] = eps * f[1:2 + d]
        out[2 + d:] = eps * eps * f[2 + d:]
        return out

    w0 = pack(0.0, y0, 1.0, eta0)
    res = solve_ivp(rhs, (0.0, s_end), w0, method="DOP853", rtol=rtol, atol=atol)
    if not res.success:
        raise RuntimeError(res.message)
    return res.y[:, -1]


def _energy_chart(boundary: Boundary, x):
    """(rho, xi, y, eta) -> (rho, xi, E, y, eta_hat)."""
    d = boundary.d
    rho, y, xi, eta = split(x, d)
    h = boundary.metric_jet(y)[0]
    E = float(eta @ np.linalg.solve(h, eta))
    return np.concatenate([[rho, xi, E], y, eta / np.sqrt(E)])


def _energy_chart_jacobian(boundary: Boundary, x):
    d = boundary.d
    rho, y, xi, eta = split(x, d)
    h, dh, _ = boundary.metric_jet(y)
    u = np.linalg.solve(h, eta)
    E = eta @ u
    dEy = -np.einsum("a,kab,b->k", u, dh, u)
    dEe = 2 * u
    N = 2 * d + 2
    J = np.zeros((N + 1, N))
    J[0, 0] = 1.0
    J[1, 1 + d] = 1.0
    J[2, 1:1 + d] = dEy
    J[2, 2 + d:] = dEe
    J[3:3 + d, 1:1 + d] = np.eye(d)
    s = np.sqrt(E)
    J[3 + d:, 2 + d:] = np.eye(d) / s
    J[3 + d:, 1:1 + d] -= np.outer(eta, dEy) / (2 * E * s)
    J[3 + d:, 2 + d:] -= np.outer(eta, dEe) / (2 * E * s)
    return J


def cone_linearization(boundary: Boundary, x):
    """Jacobian of the eps = 0 tilde field at x = (rho, y, xi, eta), raw coordinates."""
    d = boundary.d
    rho, y, xi, eta = split(x, d)
    h, dh, ddh = boundary.metric_jet(y)
    hi = np.linalg.inv(h)
    u = hi @ eta
    E = eta @ u
    dEy = -np.einsum("a,kab,b->k", u, dh, u)
    dhu = np.einsum("kab,b->ka", dh, u)
    ddEy = -np.einsum("a,klab,b->kl", u, ddh, u) + 2 * dhu @ hi @ dhu.T
    dEye = -2 * (hi @ dhu.T)  # [a, k] = d_eta_a d_y_k E
    N = 2 * d + 2
    iy, ix, ie = slice(1, 1 + d), 1 + d, slice(2 + d, N)
    A = np.zeros((N, N))
    A[0, ix] = 1.0
    A[ix, 0] = -E
    A[ix, iy] = -rho * dEy
    A[ix, ie] = -rho * 2 * u
    A[iy, iy] = -(hi @ dhu.T)
    A[iy, ie] = hi
    A[ie, iy] = -0.5 * ddEy
    A[ie, ie] = -0.5 * dEye.T
    return A


def cone_baseline(boundary: Boundary, y0, eta0, s):
    y, eta = boundary.flow(np.atleast_1d(y0), np.atleast_1d(eta0), s)
    return pack(np.sin(s), y, np.cos(s), eta)


def duhamel_difference(diff: DualJetDifference, y0, eta0, s_end=np.pi):
    """R(s) int_0^s R(t)^-1 (X_m - X'_m)(c0(t)) dt in the energy chart.

    R is the numerical fundamental matrix of the linearized cone field along
    c0(s) = (sin s, cos s, e^{sH0}(y0, eta0)).
    """
    b = diff.boundary
    d, m = diff.d, diff.m
    N = 2 * d + 2

    def forcing(s):
        x = cone_baseline(b, y0, eta0, s)
        rho, y, _, eta = split(x, d)
        F = np.zeros(N)
        F[1 + d] = -(m / 2 + 1) * rho ** (m + 1) * diff.form(y, eta)
        dy, de = diff.hamilton(y, eta)
        F[1:1 + d] = rho**m * dy
        F[2 + d:] = rho**m * de
        return F

    def rhs(s, w):
        R = w[: N * N].reshape(N, N)
        A = cone_linearization(b, cone_baseline(b, y0, eta0, s))
        return np.concatenate([(A @ R).ravel(), np.linalg.solve(R, forcing(s))])

    w0 = np.concatenate([np.eye(N).ravel(), np.zeros(N)])
    res = solve_ivp(rhs, (0.0, s_end), w0, method="DOP853", rtol=1e-13, atol=1e-14)
    R = res.y[: N * N, -1].reshape(N, N)
    e_raw = R @ res.y[N * N:, -1]
    J = _energy_chart_jacobian(b, cone_baseline(b, y0, eta0, s_end))
    return J @ e_raw, R


def linearized_difference(g: ConicMetric, gp: ConicMetric, y0, eta0, m, eps_seq=None):
    """Order-eps^m difference e_m(pi) of the tilde trajectories of g and g'.

    (a) finite differences (c_eps(pi) - c'_eps(pi)) / eps^m in the chart
    (rho~, xi~, E, y~, eta^), extrapolated to eps = 0 with a quadratic fit;
    (b) the Duhamel formula with X_m - X'_m built from the jet difference.
    """
    from .extrapolation import dyadic, extrapolate_zero

    diff = DualJetDifference(g, gp, m)
    y0 = np.atleast_1d(np.asarray(y0, float))
    eta0 = np.atleast_1d(np.asarray(eta0, float))
    eta0 = eta0 / g.boundary.norm(y0, eta0)
    eps_seq = dyadic(0.05, 5) if eps_seq is None else np.asarray(eps_seq, float)
    rows = []
    for eps in eps_seq:
        a = _energy_chart(g.boundary, tilde_state(g, y0, eta0, eps))
        b = _energy_chart(gp.boundary, tilde_state(gp, y0, eta0, eps))
        rows.append((a - b) / eps**m)
    rows = np.array(rows)
    fd = np.array([extrapolate_zero(eps_seq, rows[:, i])[0] for i in range(rows.shape[1])])
    formula, _ = duhamel_difference(diff, y0, eta0)
    gap = float(np.max(np.abs(fd - formula)))
    scale = float(np.max(np.abs(formula)))
    return {"fd": fd, "duhamel": formula, "gap": gap,
            "relative_gap": gap / scale if scale > 0 else gap, "table": rows, "eps": eps_seq}
