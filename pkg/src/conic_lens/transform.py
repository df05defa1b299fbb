"""X-ray transforms, resolvents and near-boundary limits."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.integrate import quad

from .dynamics import entry_point, integrate, split
from .extrapolation import extrapolate_zero, loglog_slope
from .geometry import ConicMetric
from .tensors import SymTensorField, _tangential_contractions, xray_integrand


@dataclass
class XrayValue:
    entry_y: np.ndarray
    entry_eta: np.ndarray
    value: float
    tau_plus: float
    status: str
    drift: float


def xray(model: ConicMetric, f: SymTensorField, y0, eta0, integrands_extra=()):
    """I_m f along the geodesic entering at (y0, eta0)."""
    g = xray_integrand(f, model)
    tr = integrate(model, entry_point(y0, eta0), integrands=(g,) + tuple(integrands_extra))
    val = tr.acc_end[2] if tr.status == "ok" else np.nan
    return XrayValue(np.atleast_1d(y0), np.atleast_1d(eta0), float(val), tr.tau_plus, tr.status, tr.drift)


def xray_many(model, fields, y0, eta0, **kw):
    """Several transforms along one geodesic (shared trajectory).

    Extra keywords (rtol, atol, ...) go to ``dynamics.integrate``.
    """
    gs = tuple(xray_integrand(f, model) for f in fields)
    tr = integrate(model, entry_point(y0, eta0), integrands=gs, **kw)
    return np.asarray(tr.acc_end[2:2 + len(fields)], float), tr


def resolvent(model: ConicMetric, f: SymTensorField, z, sign=+1):
    """R_+ f(z) = int_0^{tau+} and R_- f(z) = -int_{tau-}^0 of rho^-2 pi*f.

    With this convention R_+ f - R_- f equals I f along the geodesic.
    """
    z = np.asarray(z, float)
    if sign > 0 and z[0] == 0.0 and z[1 + model.d] < 0:
        return 0.0
    if sign < 0 and z[0] == 0.0 and z[1 + model.d] > 0:
        return 0.0
    g = xray_integrand(f, model)
    tr = integrate(model, z, direction=1 if sign > 0 else -1, integrands=(g,))
    if tr.status != "ok":
        return np.nan
    # backward integration accumulates int_0^{tau-} = -int_{tau-}^0
    return float(tr.acc_end[2])


def boundary_quadrature(boundary, f: SymTensorField, y0, eta0, k):
    """sum_l C(m,l) int_0^pi sin^(k+m-l-2) cos^l F_{0^l,...}(alpha, alpha') ds.

    alpha is the unit-speed boundary geodesic from (y0, eta0/|eta0|) and F the
    coefficients of f on the boundary face.
    """
    eta0 = np.atleast_1d(eta0) / boundary.norm(y0, eta0)
    m = f.m

    def integrand(s):
        y, eta = boundary.flow(np.atleast_1d(y0), eta0, s)
        F = f.coeffs(0.0, y)
        if m == 0:
            return np.sin(s) ** (k - 2) * float(F)
        vel = np.linalg.solve(boundary.metric(y), eta)
        T = _tangential_contractions(F, 1.0, vel, m)
        return sum(comb(m, l) * np.sin(s) ** (k + m - l - 2) * np.cos(s) ** l * T[l] for l in range(m + 1))

    return quad(integrand, 0.0, np.pi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


def scaled_transform(model, f, y0, eta0, k, eps):
    """eps^(1-k) int_0^{tau+} rho^(k-2) pi*f along the entry (y0, eta0/eps)."""
    g = xray_integrand(f, model, extra=k - 2.0)
    eta0 = np.atleast_1d(eta0) / model.boundary.norm(y0, eta0)
    tr = integrate(model, entry_point(y0, eta0 / eps), integrands=(g,))
    return eps ** (1.0 - k) * float(tr.acc_end[2])


def boundary_pi_transform(model, f, y0, eta0, k, eps_seq):
    """Large-|eta| limit of the weighted transform against the boundary quadrature."""
    eps_seq = np.asarray(eps_seq, float)
    vals = np.array([scaled_transform(model, f, y0, eta0, k, e) for e in eps_seq])
    limit, err = extrapolate_zero(eps_seq, vals)
    truth = boundary_quadrature(model.boundary, f, y0, eta0, k)
    gaps = np.abs(vals - truth)
    return {
        "eps": eps_seq.tolist(),
        "values": vals.tolist(),
        "limit": limit,
        "extrapolation_err": err,
        "boundary_value": truth,
        "gap": abs(limit - truth),
        "rate": loglog_slope(eps_seq, gaps),
    }


class JetField(SymTensorField):
    """Scalar rho^(2+j) sum_{i>=j} fbar_i(y) rho^(i-j) chi(rho), jets below j removed."""

    def __init__(self, jets, j, n, cut=(0.5, 1.0)):
        super().__init__(0, 2 + j, n)
        self.jets, self.j, self.cut = jets, j, cut

    def coeffs(self, rho, y):
        from ._smooth import cutoff

        chi = cutoff(rho, *self.cut)[0]
        return np.asarray(chi * sum(fb(np.atleast_1d(y)) * rho ** (i - self.j)
                                    for i, fb in enumerate(self.jets) if i >= self.j))


def i0_jet_probe(model, jets, y0, eta0, eps_seq):
    """Table over j of lim |eta|^(j+1) I0 and int_0^pi sin^j fbar_j(alpha) ds.

    f = rho^2 sum_j fbar_j rho^j; the j-th row uses f with lower jets removed.
    """
    rows = []
    for j in range(len(jets)):
        fld = JetField(jets, j, model.n)
        # |eta|^(j+1) I0 = eps^(-1-j) int rho^j F d tau: the weighted transform with weight j + 2
        vals = []
        eps_seq = np.asarray(eps_seq, float)
        e0 = np.atleast_1d(eta0) / model.boundary.norm(y0, eta0)
        for e in eps_seq:
            g = xray_integrand(fld, model)
            tr = integrate(model, entry_point(y0, e0 / e), integrands=(g,))
            vals.append(e ** (-1.0 - j) * tr.acc_end[2])
        limit, err = extrapolate_zero(eps_seq, vals)
        truth = quad(lambda s: np.sin(s) ** j * float(jets[j](model.boundary.flow(np.atleast_1d(y0), e0, s)[0])),
                     0.0, np.pi, epsabs=1e-14, epsrel=1e-13)[0]
        rows.append({"j": j, "values": list(map(float, vals)), "limit": limit, "err": err,
                      "boundary_value": truth, "gap": abs(limit - truth)})
    return rows
