"""Lens data: scattering map and renormalized length."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .dynamics import Trajectory, integrate, integrate_entry, split
from .extrapolation import dyadic, extrapolate_zero
from .geometry import ConicMetric


@dataclass
class LensRecord:
    entry_y: np.ndarray
    entry_eta: np.ndarray
    exit_y: np.ndarray
    exit_eta: np.ndarray
    tau_plus: float
    length: float
    drift: float
    status: str
    method: str = ""
    table: dict = field(default_factory=dict)


def scattering_map(model: ConicMetric, y0, eta0, traj: Trajectory | None = None):
    """Exit point (y1, eta1) of the geodesic entering at (y0, eta0).

    Returns (None, None) when the trajectory is trapped.
    """
    tr = traj if traj is not None else integrate_entry(model, y0, eta0)
    if tr.status != "ok":
        return None, None
    _, y1, _, eta1 = split(tr.z_end, model.d)
    return y1.copy(), eta1.copy()


def _breakpoints(tr: Trajectory, a, b):
    inner = [t for t in tr.turning if a < t < b]
    return [a] + inner + [b]


def arclength(tr: Trajectory, a, b, inv_a=None, inv_b=None):
    """Length of the trajectory between rescaled times a < b with rho > 0.

    rho^-2 is split into the regular density (1 - |rho'|)/rho^2, carried as
    accumulator 0, and |rho'|/rho^2 whose integral is the total variation
    of 1/rho over the monotone pieces. inv_a, inv_b optionally supply 1/rho
    at the ends when it is known more accurately than the interpolant.
    """
    reg = tr.acc(b)[0] - tr.acc(a)[0]
    pts = _breakpoints(tr, a, b)
    inv = [1.0 / tr.rho(t) for t in pts]
    if inv_a is not None:
        inv[0] = inv_a
    if inv_b is not None:
        inv[-1] = inv_b
    return reg + float(np.sum(np.abs(np.diff(inv))))


def length_limit(tr: Trajectory):
    """Renormalized length from the closed decomposition (no extrapolation)."""
    reg = tr.acc_end[0]
    inv = [1.0 / tr.rho(t) for t in tr.turning]
    # entry and exit contribute 1/rho -> infinity, cancelled by 2/eps
    if not inv:
        return np.nan
    tv = -inv[0] - inv[-1] + float(np.sum(np.abs(np.diff(inv))))
    return reg + tv


def _cut_times(tr: Trajectory, level, bdf=None):
    """First and last rescaled times where the boundary defining function equals level."""
    fn = (lambda t: tr.rho(t) - level) if bdf is None else (lambda t: bdf(tr.state(t)) - level)
    t_first = tr.turning[0] if tr.turning.size else tr.tau_plus / 2
    t_last = tr.turning[-1] if tr.turning.size else tr.tau_plus / 2
    return brentq(fn, 0.0, t_first, xtol=1e-15, rtol=1e-15), brentq(
        fn, t_last, tr.tau_plus, xtol=1e-15, rtol=1e-15
    )


def renormalized_length(model: ConicMetric, y0, eta0, method="cut-extrapolation",
                        traj: Trajectory | None = None, levels=None, bdf=None):
    """Renormalized length of the geodesic entering at (y0, eta0).

    method 'cut-extrapolation': length inside {rho > eps} minus 2/eps on a
    dyadic eps sequence, extrapolated to eps = 0 with a quadratic fit.
    method 'tau-subtraction': integral of rho^-2 over [delta, tau+ - delta]
    minus 2/delta, extrapolated the same way.
    method 'limit': the closed decomposition, no extrapolation.
    ``bdf`` (cut-extrapolation only) replaces rho by another boundary
    defining function, given as a callable on phase points.
    """
    tr = traj if traj is not None else integrate_entry(model, y0, eta0)
    y1, eta1 = scattering_map(model, y0, eta0, tr)
    rec = LensRecord(np.atleast_1d(y0), np.atleast_1d(eta0), y1, eta1, tr.tau_plus,
                     np.nan, tr.drift, tr.status, method)
    if tr.status != "ok":
        return rec
    rho_max = max([tr.rho(t) for t in tr.turning] + [0.0])
    if method == "limit":
        rec.length = length_limit(tr)
        return rec
    if method == "cut-extrapolation":
        hs = dyadic(0.002 * rho_max) if levels is None else np.asarray(levels)
        vals = []
        for eps in hs:
            a, b = _cut_times(tr, eps, bdf)
            if bdf is None:
                ia = ib = 1.0 / eps
            else:
                ia, ib = 1.0 / bdf.rho_at(tr.state(a), eps), 1.0 / bdf.rho_at(tr.state(b), eps)
            vals.append(arclength(tr, a, b, ia, ib) - 2.0 / eps)
    elif method == "tau-subtraction":
        hs = dyadic(0.005 * min(rho_max, tr.tau_plus)) if levels is None else np.asarray(levels)
        vals = []
        om_end = tr.acc_end[1]
        for dl in hs:
            a, b = dl, tr.tau_plus - dl
            # 1/rho(delta) - 1/delta without cancellation: delta - rho(delta) = Omega(delta)
            oa = tr.acc(a)[1]
            ob = om_end - tr.acc(b)[1]
            ia = 1.0 / (dl - oa)
            ib = 1.0 / (dl - ob)
            body = arclength(tr, a, b, ia, ib) - ia - ib
            vals.append(body + oa / (dl * (dl - oa)) + ob / (dl * (dl - ob)))
    else:
        raise ValueError(f"unknown method {method!r}")
    rec.length, err = extrapolate_zero(hs, vals)
    rec.table = {"h": list(map(float, hs)), "values": list(map(float, vals)), "err": err}
    return rec


class BdfChange:
    """Alternative boundary defining function rho~ = rho + a(y) rho^2."""

    def __init__(self, a, d):
        from .boundary import TrigPoly

        self.a = a if isinstance(a, TrigPoly) else TrigPoly.make(a)
        self.d = d

    def __call__(self, z):
        rho = z[0]
        return rho + self.a(z[1:1 + self.d]) * rho * rho

    def rho_at(self, z, level):
        """Solve rho + a rho^2 = level for the small root."""
        a = self.a(z[1:1 + self.d])
        return 2.0 * level / (1.0 + np.sqrt(1.0 + 4.0 * a * level))


def bdf_change_gap(model: ConicMetric, y0, eta0, a, traj=None):
    """Return (L~ - L, a(y0) + a(y1)) for rho~ = rho + a rho^2."""
    tr = traj if traj is not None else integrate_entry(model, y0, eta0)
    bdf = BdfChange(a, model.d)
    L = renormalized_length(model, y0, eta0, "cut-extrapolation", traj=tr).length
    Lt = renormalized_length(model, y0, eta0, "cut-extrapolation", traj=tr, bdf=bdf).length
    y1, _ = scattering_map(model, y0, eta0, tr)
    return Lt - L, bdf.a(np.atleast_1d(y0)) + bdf.a(y1)


# ---------------------------------------------------------------------------
# first variation of the renormalized length


@dataclass
class VariationResult:
    derivative: float
    raw_derivative: float
    endpoint_term: float
    i2: float
    table: dict
    status: str


def lens_variation(model: ConicMetric, q, y0, eta0, steps=(0.01, 0.005, 0.0025)):
    """dL/ds of L_{g + s q}(z) at s = 0 against I_2(q) along the g-geodesic.

    ``q`` is a TensorBump supported away from the collar. Central differences
    (L(s) - L(-s)) / 2s are extrapolated to s = 0 in s^2. Lengths use the
    closed decomposition, which is exact for the conic ends.

    At fixed entry the exit point moves with s, and L changes by
    eta_1 . dy_1/ds on top of the length integral. ``derivative`` removes
    that term, giving the variation at fixed scattering data;
    ``raw_derivative`` is the plain derivative at fixed entry.
    """
    from .geometry import PerturbedMetric
    from .tensors import FrameTensorField
    from .transform import xray

    d = model.d
    fam = PerturbedMetric(model, q, 0.0)
    steps = np.asarray(steps, float)
    diffs, moves = [], []
    for s in steps:
        ends = []
        for sg in (s, -s):
            g = fam.with_s(sg)
            tr = integrate_entry(g, y0, eta0)
            if tr.status != "ok":
                return VariationResult(np.nan, np.nan, np.nan, np.nan, {}, "trapped")
            ends.append((length_limit(tr), split(tr.z_end, d)[1]))
        diffs.append((ends[0][0] - ends[1][0]) / (2 * s))
        moves.append((ends[0][1] - ends[1][1]) / (2 * s))
    raw, err = extrapolate_zero(steps**2, diffs, degree=1)
    moves = np.array(moves)
    dy1 = np.array([extrapolate_zero(steps**2, moves[:, i], degree=1)[0] for i in range(d)])
    base = integrate_entry(model, y0, eta0)
    eta1 = split(base.z_end, d)[3]
    endpoint = float(eta1 @ dy1)
    i2 = xray(model, FrameTensorField(q, model.n), y0, eta0)
    table = {"s": steps.tolist(), "dL": diffs, "err": err, "dy1": dy1.tolist()}
    return VariationResult(raw - endpoint, raw, endpoint, i2.value, table, i2.status)


def bump_trace_direct(model: ConicMetric, q, c, y0, eta0):
    """int chi(gamma(t)) c dt for q = c chi g, by quadrature of rho^-2 chi."""
    d = model.d

    def integrand(z, f):
        if not q.bump.contains(z[0], z[1:1 + d]):
            return 0.0
        return c * q.bump.jet(z[0], z[1:1 + d])[0] / (z[0] * z[0])

    tr = integrate_entry(model, y0, eta0, integrands=(integrand,))
    return float(tr.acc_end[2])


# ---------------------------------------------------------------------------
# boundary quadratures of the perturbative identities


def perturbative_identities(diff, y0, eta0, nodes=200):
    """Quadratures along e^{sH0}(y0, eta0), s in [0, pi], for T = T_m.

    energyvar:       int sin^m H0T ds
    equcos:          int cos sin^(m+1) T ds
    equdirectionH0:  int (sin^m - (m/2 + 1) sin^(m+2)) T ds
    ``diff`` is a DualJetDifference (or anything with form, h0_derivative,
    boundary and m). eta0 is normalized to unit h0-length.
    """
    b, m = diff.boundary, diff.m
    y0 = np.atleast_1d(np.asarray(y0, float))
    eta0 = np.atleast_1d(np.asarray(eta0, float))
    eta0 = eta0 / b.norm(y0, eta0)
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * np.pi * (x + 1)
    w = 0.5 * np.pi * w
    T = np.empty(nodes)
    HT = np.empty(nodes)
    for i, si in enumerate(s):
        y, eta = b.flow(y0, eta0, si)
        T[i] = diff.form(y, eta)
        HT[i] = diff.h0_derivative(y, eta)
    sn, cs = np.sin(s), np.cos(s)
    return {
        "energyvar": float(np.sum(w * sn**m * HT)),
        "equcos": float(np.sum(w * cs * sn ** (m + 1) * T)),
        "equdirectionH0": float(np.sum(w * (sn**m - (m / 2 + 1) * sn ** (m + 2)) * T)),
    }


def large_eta_scattering(model: ConicMetric, y0, eta0, eps_seq):
    """Gap between the dilated scattering map and the time-pi boundary flow.

    For each eps, (y1, eta1) = S_g(y0, eta0/eps) is compared with
    |eta0| . phi_pi(y0, eta0/|eta0|) after scaling eta1 by eps. Returns the
    gaps and their fitted power of eps.
    """
    from .extrapolation import loglog_slope

    b = model.boundary
    y0 = np.atleast_1d(np.asarray(y0, float))
    eta0 = np.atleast_1d(np.asarray(eta0, float))
    e0 = b.norm(y0, eta0)
    ylim, elim = b.flow(y0, eta0 / e0, np.pi)
    elim = e0 * elim
    gaps = []
    for eps in eps_seq:
        y1, eta1 = scattering_map(model, y0, eta0 / eps)
        if y1 is None:
            gaps.append(np.nan)
            continue
        dy = b.difference(y1, ylim)
        gaps.append(float(np.max(np.abs(np.concatenate([dy, eps * eta1 - elim])))))
    return {"eps": list(map(float, eps_seq)), "gap": gaps, "rate": loglog_slope(eps_seq, gaps)}
