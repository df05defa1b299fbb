"""Asymptotically conic metrics in a collar chart x = (rho, y).

Every model exposes the metric in the scattering frame
(d rho / rho^2, dy / rho) as an n x n matrix G(rho, y) together with its first
and second coordinate derivatives. Models in normal form additionally expose
the boundary family h_rho through ``h_jet``; there G = diag(1, h_rho).
"""
from __future__ import annotations

import numpy as np

from ._smooth import bump, cutoff
from .boundary import Boundary, Sphere, TrigPoly
from .profiles import RadialProfile


class ConicMetric:
    """Base class for metrics on the compactified collar."""

    normal = True

    def __init__(self, boundary: Boundary):
        self.boundary = boundary
        self.d = boundary.d
        self.n = boundary.d + 1

    # rho below which the metric is in normal form g = drho^2/rho^4 + h/rho^2
    nf_radius = np.inf

    def h_jet(self, rho, y, order=2):
        raise NotImplementedError

    def frame_jet(self, rho, y, order=2):
        """G, dG[k,a,b] = d_k G_ab, ddG[k,l,a,b] with k,l over (rho, y)."""
        d, n = self.d, self.n
        h, dh, ddh = self.h_jet(rho, y, order)
        G = np.zeros((n, n))
        G[0, 0] = 1.0
        G[1:, 1:] = h
        dG = np.zeros((n, n, n))
        dG[:, 1:, 1:] = dh
        ddG = None
        if order >= 2:
            ddG = np.zeros((n, n, n, n))
            ddG[:, :, 1:, 1:] = ddh
        return G, dG, ddG

    def is_normal_at(self, rho):
        return self.normal or rho < self.nf_radius

    def describe(self):
        return repr(self)


class ExactCone(ConicMetric):
    """g = drho^2/rho^4 + h0/rho^2, the exact cone over the boundary."""

    def h_jet(self, rho, y, order=2):
        h0, dh0, ddh0 = self.boundary.metric_jet(y)
        d = self.d
        dh = np.zeros((d + 1, d, d))
        dh[1:] = dh0
        ddh = np.zeros((d + 1, d + 1, d, d))
        ddh[1:, 1:] = ddh0
        return h0, dh, ddh

    def __repr__(self):
        return f"ExactCone({self.boundary!r})"


class WarpedProduct(ConicMetric):
    """dr^2 + f(r)^2 h_unit written with rho = 1/r.

    The boundary carries h0 = a^2 h_unit where a is the asymptotic slope of
    the profile, so h_rho = (psi(rho)/a)^2 h0 with psi(rho) = rho f(1/rho).
    """

    def __init__(self, boundary: Boundary, profile: RadialProfile):
        super().__init__(boundary)
        self.profile = profile
        scale = getattr(boundary, "scale", None)
        if scale is None:
            raise ValueError("warped products need a circle or sphere boundary")
        if not np.isclose(scale, profile.a):
            raise ValueError("boundary scale must equal the profile slope a")

    @classmethod
    def build(cls, kind, profile):
        from .boundary import Circle

        if kind == "circle":
            return cls(Circle(2 * np.pi * profile.a), profile)
        return cls(Sphere(profile.a), profile)

    def sigma_jet(self, rho):
        psi, dpsi, ddpsi = self.profile.psi_jet(rho)
        a2 = self.profile.a**2
        return psi**2 / a2, 2 * psi * dpsi / a2, 2 * (dpsi**2 + psi * ddpsi) / a2

    def h_jet(self, rho, y, order=2):
        s, ds, dds = self.sigma_jet(rho)
        h0, dh0, ddh0 = self.boundary.metric_jet(y)
        d = self.d
        dh = np.zeros((d + 1, d, d))
        dh[0] = ds * h0
        dh[1:] = s * dh0
        ddh = np.zeros((d + 1, d + 1, d, d))
        ddh[0, 0] = dds * h0
        ddh[0, 1:] = ds * dh0
        ddh[1:, 0] = ds * dh0
        ddh[1:, 1:] = s * ddh0
        return s * h0, dh, ddh

    def __repr__(self):
        return f"WarpedProduct({self.boundary!r}, {self.profile!r})"


class TensorField:
    """Symmetric 2-tensor on the boundary: sum_k s_k(y) B_k(y).

    Each B_k is either the boundary metric h0 (``"h0"``) or a constant matrix.
    """

    def __init__(self, boundary: Boundary, terms):
        self.boundary = boundary
        self.terms = []
        for s, b in terms:
            if not isinstance(s, TrigPoly):
                s = TrigPoly.make(s)
            if not (isinstance(b, str) and b == "h0"):
                b = np.asarray(b, float)
                b = 0.5 * (b + b.T)
            self.terms.append((s, b))

    @classmethod
    def metric(cls, boundary, c=1.0):
        return cls(boundary, [(TrigPoly.constant(c, boundary.d), "h0")])

    def jet(self, y):
        d = self.boundary.d
        P = np.zeros((d, d))
        dP = np.zeros((d, d, d))
        ddP = np.zeros((d, d, d, d))
        for s, b in self.terms:
            v, g, hs = s.jet(y)
            if isinstance(b, str):
                B, dB, ddB = self.boundary.metric_jet(y)
            else:
                B, dB, ddB = b, np.zeros((d, d, d)), np.zeros((d, d, d, d))
            P += v * B
            dP += np.einsum("k,ab->kab", g, B) + v * dB
            ddP += (
                np.einsum("kl,ab->klab", hs, B)
                + np.einsum("k,lab->klab", g, dB)
                + np.einsum("l,kab->klab", g, dB)
                + v * ddB
            )
        return P, dP, ddP

    def __call__(self, y):
        return self.jet(y)[0]


class PerturbedConic(ConicMetric):
    """h_rho = h0 + sum_j amp_j rho^{m_j} chi(rho) P_j(y).

    chi is a cutoff equal to one for rho <= cut[0] (including negative rho)
    and vanishing for rho >= cut[1].
    """

    def __init__(self, boundary: Boundary, terms, cut=(0.5, 1.0)):
        super().__init__(boundary)
        self.terms = []
        for m, amp, field in terms:
            if not isinstance(field, TensorField):
                field = TensorField(boundary, field)
            self.terms.append((int(m), float(amp), field))
        self.cut = (float(cut[0]), float(cut[1]))

    def radial(self, m, rho):
        c, dc, ddc = cutoff(rho, *self.cut)
        p = rho**m
        dp = m * rho ** (m - 1) if m >= 1 else 0.0
        ddp = m * (m - 1) * rho ** (m - 2) if m >= 2 else 0.0
        return p * c, dp * c + p * dc, ddp * c + 2 * dp * dc + p * ddc

    def h_jet(self, rho, y, order=2):
        h0, dh0, ddh0 = self.boundary.metric_jet(y)
        d = self.d
        h = h0.copy()
        dh = np.zeros((d + 1, d, d))
        dh[1:] = dh0
        ddh = np.zeros((d + 1, d + 1, d, d))
        ddh[1:, 1:] = ddh0
        for m, amp, field in self.terms:
            w, dw, ddw = self.radial(m, rho)
            if w == 0 and dw == 0 and ddw == 0:
                continue
            P, dP, ddP = field.jet(y)
            h += amp * w * P
            dh[0] += amp * dw * P
            dh[1:] += amp * w * dP
            ddh[0, 0] += amp * ddw * P
            ddh[0, 1:] += amp * dw * dP
            ddh[1:, 0] += amp * dw * dP
            ddh[1:, 1:] += amp * w * ddP
        return h, dh, ddh

    def __repr__(self):
        return f"PerturbedConic({self.boundary!r}, m={[t[0] for t in self.terms]}, cut={self.cut})"


class CollarBump:
    """Compact bump in (rho, y): B((rho-rc)/wr) * prod B(2 sin((y-yc)/2)/wy)."""

    def __init__(self, rho_c, y_c, w_rho, w_y):
        self.rho_c = float(rho_c)
        self.y_c = np.atleast_1d(np.asarray(y_c, float))
        self.w_rho = float(w_rho)
        self.w_y = np.broadcast_to(np.asarray(w_y, float), self.y_c.shape).copy()
        if self.rho_c - self.w_rho <= 0:
            raise ValueError("bump support must stay away from the boundary")

    @property
    def rho_min(self):
        return self.rho_c - self.w_rho

    def jet(self, rho, y):
        y = np.atleast_1d(y)
        n = y.size + 1
        if abs(rho - self.rho_c) >= self.w_rho:
            return 0.0, np.zeros(n), np.zeros((n, n))
        vals, d1, d2 = [], [], []
        b, db, ddb = bump((rho - self.rho_c) / self.w_rho)
        vals.append(b)
        d1.append(db / self.w_rho)
        d2.append(ddb / self.w_rho**2)
        for yi, ci, wi in zip(y, self.y_c, self.w_y):
            delta = yi - ci
            u = 2 * np.sin(delta / 2) / wi
            du = np.cos(delta / 2) / wi
            ddu = -np.sin(delta / 2) / (2 * wi)
            b, db, ddb = bump(u)
            vals.append(b)
            d1.append(db * du)
            d2.append(ddb * du * du + db * ddu)
        v = 1.0
        for x in vals:
            v *= x
        g = np.zeros(n)
        hs = np.zeros((n, n))
        for i in range(n):
            oth = 1.0
            for j in range(n):
                if j != i:
                    oth *= vals[j]
            g[i] = d1[i] * oth
            hs[i, i] = d2[i] * oth
            for j in range(i + 1, n):
                o2 = 1.0
                for l in range(n):
                    if l != i and l != j:
                        o2 *= vals[l]
                hs[i, j] = hs[j, i] = d1[i] * d1[j] * o2
        return v, g, hs

    def contains(self, rho, y):
        if abs(rho - self.rho_c) >= self.w_rho:
            return False
        u = 2 * np.sin((np.atleast_1d(y) - self.y_c) / 2) / self.w_y
        return bool(np.all(np.abs(u) < 1))


class ConformalBump(ConicMetric):
    """exp(2 amp B) times a base metric, B a collar bump."""

    normal = False

    def __init__(self, base: ConicMetric, bump_: CollarBump, amp):
        super().__init__(base.boundary)
        self.base, self.bump, self.amp = base, bump_, float(amp)
        self.nf_radius = min(bump_.rho_min, base.nf_radius)

    def h_jet(self, rho, y, order=2):
        return self.base.h_jet(rho, y, order)

    def frame_jet(self, rho, y, order=2):
        G, dG, ddG = self.base.frame_jet(rho, y, order)
        v, g, hs = self.bump.jet(rho, y)
        if v == 0 and not g.any():
            return G, dG, ddG
        e = np.exp(2 * self.amp * v)
        de = 2 * self.amp * g * e
        Gn = e * G
        dGn = e * dG + np.einsum("k,ab->kab", de, G)
        ddGn = None
        if order >= 2:
            dde = (2 * self.amp * hs + 4 * self.amp**2 * np.outer(g, g)) * e
            ddGn = (
                e * ddG
                + np.einsum("k,lab->klab", de, dG)
                + np.einsum("l,kab->klab", de, dG)
                + np.einsum("kl,ab->klab", dde, G)
            )
        return Gn, dGn, ddGn

    def __repr__(self):
        return f"ConformalBump({self.base!r}, amp={self.amp!r})"


class TensorBump:
    """Symmetric 2-tensor q with scattering-frame components B(rho, y) * C.

    ``C`` is a constant n x n matrix, or the string ``"g"`` meaning the
    scattering-frame components of a reference metric.
    """

    def __init__(self, bump_: CollarBump, C, reference: ConicMetric | None = None):
        self.bump = bump_
        self.reference = reference
        if isinstance(C, str):
            if reference is None:
                raise ValueError("C='g' needs a reference metric")
            self.C = None
        else:
            C = np.asarray(C, float)
            self.C = 0.5 * (C + C.T)

    def frame_jet(self, rho, y, order=2):
        v, g, hs = self.bump.jet(rho, y)
        if self.C is None:
            G, dG, ddG = self.reference.frame_jet(rho, y, order)
        else:
            n = self.C.shape[0]
            G, dG, ddG = self.C, np.zeros((n, n, n)), np.zeros((n, n, n, n))
        Q = v * G
        dQ = v * dG + np.einsum("k,ab->kab", g, G)
        ddQ = None
        if order >= 2:
            ddQ = (
                v * ddG
                + np.einsum("k,lab->klab", g, dG)
                + np.einsum("l,kab->klab", g, dG)
                + np.einsum("kl,ab->klab", hs, G)
            )
        return Q, dQ, ddQ


class PerturbedMetric(ConicMetric):
    """g + s q for a compactly supported interior tensor bump q."""

    normal = False

    def __init__(self, base: ConicMetric, q: TensorBump, s=0.0):
        super().__init__(base.boundary)
        self.base, self.q, self.s = base, q, float(s)
        self.nf_radius = min(q.bump.rho_min, base.nf_radius)

    def with_s(self, s):
        return PerturbedMetric(self.base, self.q, s)

    def h_jet(self, rho, y, order=2):
        return self.base.h_jet(rho, y, order)

    def frame_jet(self, rho, y, order=2):
        G, dG, ddG = self.base.frame_jet(rho, y, order)
        if self.s == 0:
            return G, dG, ddG
        Q, dQ, ddQ = self.q.frame_jet(rho, y, order)
        return G + self.s * Q, dG + self.s * dQ, None if ddG is None else ddG + self.s * ddQ

    def __repr__(self):
        return f"PerturbedMetric({self.base!r}, s={self.s!r})"


# ---------------------------------------------------------------------------
# metric evaluation and curvature


def frame_scales(rho, n):
    """Coordinate components of the scattering frame vectors: (rho^2, rho, ...)."""
    s = np.full(n, float(rho))
    s[0] = rho * rho
    return s


def metric_at(model: ConicMetric, rho, y, frame="sc"):
    """Metric at (rho, y) as an n x n matrix in the chosen frame.

    frame='sc' gives scattering-frame components; frame='coord' gives
    coordinate components in (rho, y).
    """
    G = model.frame_jet(rho, np.atleast_1d(y), order=1)[0]
    if frame == "sc":
        return G
    if frame == "coord":
        if rho <= 0:
            raise ValueError("coordinate components blow up at the boundary")
        s = frame_scales(rho, model.n)
        return G / np.outer(s, s)
    raise ValueError("frame must be 'sc' or 'coord'")


def coordinate_jet(model: ConicMetric, rho, y):
    """Coordinate metric g_ab in (rho, y) with first and second derivatives."""
    n = model.n
    G, dG, ddG = model.frame_jet(rho, np.atleast_1d(y), order=2)
    p = np.full((n, n), 2.0)
    p[0, :] += 1.0
    p[:, 0] += 1.0
    w = rho ** (-p)
    dw = -p * rho ** (-p - 1)
    ddw = p * (p + 1) * rho ** (-p - 2)
    g = G * w
    dg = dG * w
    dg[0] += G * dw
    ddg = ddG * w
    ddg[0, 0] += 2 * dG[0] * dw + G * ddw
    ddg[0, 1:] += dG[1:] * dw
    ddg[1:, 0] += dG[1:] * dw
    return g, dg, ddg


def riemann_lower(g, dg, ddg):
    """Fully covariant curvature T with K(u, v) = T(u,v,u,v) / |u ^ v|^2.

    dg[k,a,b] = d_k g_ab, ddg[k,l,a,b] = d_k d_l g_ab.
    """
    return christoffel_and_riemann(g, dg, ddg)[1]


def christoffel_and_riemann(g, dg, ddg):
    """(Gamma^a_bc, T_abcd) from one metric jet."""
    ginv = np.linalg.inv(g)
    # Gamma_{d,bc} (first kind)
    gam1 = 0.5 * (np.einsum("bdc->dbc", dg) + np.einsum("cdb->dbc", dg) - dg)
    gam2 = np.einsum("ad,dbc->abc", ginv, gam1)
    # T_abcd = 1/2 (g_ad,bc + g_bc,ad - g_ac,bd - g_bd,ac) + g_ef (G^e_bc G^f_ad - G^e_bd G^f_ac)
    t1 = (
        np.einsum("bcad->abcd", ddg)
        + np.einsum("adbc->abcd", ddg)
        - np.einsum("bdac->abcd", ddg)
        - np.einsum("acbd->abcd", ddg)
    )
    t2 = np.einsum("fbc,fad->abcd", gam1, gam2) - np.einsum("fbd,fac->abcd", gam1, gam2)
    return gam2, 0.5 * t1 + t2


def _sectional(T, g, u, v):
    num = np.einsum("abcd,a,b,c,d->", T, u, v, u, v)
    den = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    return num / den


def sectional_curvature(model: ConicMetric, rho, y, u, v):
    """Sectional curvature of the plane spanned by u, v.

    u and v are given by scattering-frame components (rho^2 d_rho, rho d_y).
    Computed from the coordinate Riemann tensor, so it applies to any model.
    """
    g, dg, ddg = coordinate_jet(model, rho, y)
    T = riemann_lower(g, dg, ddg)
    s = frame_scales(rho, model.n)
    return _sectional(T, g, np.asarray(u, float) * s, np.asarray(v, float) * s)


def curvature_tensor_sc(model: ConicMetric, rho, y):
    """Covariant curvature tensor in scattering-frame components."""
    g, dg, ddg = coordinate_jet(model, rho, y)
    T = riemann_lower(g, dg, ddg)
    s = frame_scales(rho, model.n)
    return np.einsum("abcd,a,b,c,d->abcd", T, s, s, s, s), model.frame_jet(rho, y, 1)[0]


def _slice_gauss(model, rho, y):
    """Gaussian curvature of h_rho on the boundary at fixed rho (d = 2)."""
    h, dh, ddh = model.h_jet(rho, y)
    T = riemann_lower(h, dh[1:], ddh[1:, 1:])
    return T[0, 1, 0, 1] / np.linalg.det(h)


def _h_orthonormal(h, vbar):
    vbar = np.asarray(vbar, float)
    return vbar / np.sqrt(vbar @ h @ vbar)


def slice_curvature(model: ConicMetric, rho, y, vbar, wbar):
    """K(V, W) for V, W tangent to the level sets of rho, via h_rho.

    vbar, wbar are coordinate vectors on the boundary; they are
    orthonormalized with respect to h_rho. Requires a 2-dimensional boundary
    and a model in normal form at rho.
    """
    if model.d != 2:
        raise ValueError("tangential planes need a 2-dimensional boundary")
    h, dh, _ = model.h_jet(rho, y)
    v = _h_orthonormal(h, vbar)
    w = np.asarray(wbar, float) - (v @ h @ wbar) * v
    w = _h_orthonormal(h, w)
    dr = dh[0]
    kh = _slice_gauss(model, rho, y)
    avv, aww, avw = v @ dr @ v, w @ dr @ w, v @ dr @ w
    return (
        rho**2 * (kh - 1.0)
        + 0.5 * rho**3 * (avv + aww)
        - 0.25 * rho**4 * (avv * aww - avw**2)
    )


def mixed_curvature(model: ConicMetric, rho, y, vbar):
    """K(Z, V) with Z = rho^2 d_rho the unit normal and V tangential."""
    h, dh, ddh = model.h_jet(rho, y)
    v = _h_orthonormal(h, vbar)
    S = np.linalg.solve(h, dh[0])
    Sv = S @ v
    return -0.5 * rho**4 * (v @ ddh[0, 0] @ v) + 0.25 * rho**4 * (Sv @ h @ Sv)


def tangent_orthonormal(model, rho, y):
    """Scattering-frame components of an orthonormal basis of ker d rho."""
    G = model.frame_jet(rho, np.atleast_1d(y), 1)[0]
    h = G[1:, 1:]
    L = np.linalg.cholesky(np.linalg.inv(h))
    n = model.n
    out = []
    for i in range(model.d):
        e = np.zeros(n)
        e[1:] = L[:, i]
        out.append(e)
    return out


def _loglog_slope(rhos, vals):
    rhos = np.asarray(rhos, float)
    vals = np.abs(np.asarray(vals, float))
    good = vals > 0
    if good.sum() < 2:
        return np.inf
    return float(np.polyfit(np.log(rhos[good]), np.log(vals[good]), 1)[0])


def curvature_decay_rates(model: ConicMetric, rhos, ys):
    """Fitted power-law exponents of the curvature as rho -> 0.

    For each radius the maximum over sample points ``ys`` is taken of
    |K(V, W)|, |K(Z, V)| and |R(V, W, W, Z)| with V, W orthonormal tangential
    and Z = rho^2 d_rho. Returns a dict of slopes of log max vs log rho
    (``None`` where the term does not exist, e.g. K(V, W) when n = 2).
    """
    rhos = np.asarray(rhos, float)
    kvw, kzv, rvwwz = [], [], []
    for rho in rhos:
        a, b, c = 0.0, 0.0, 0.0
        for y in ys:
            T, G = curvature_tensor_sc(model, rho, np.atleast_1d(y))
            es = tangent_orthonormal(model, rho, y)
            z = np.zeros(model.n)
            z[0] = 1.0 / np.sqrt(G[0, 0])
            for i, v in enumerate(es):
                b = max(b, abs(_sectional(T, G, z, v)))
                for w in es[i + 1:]:
                    a = max(a, abs(_sectional(T, G, v, w)))
                    c = max(c, abs(np.einsum("abcd,a,b,c,d->", T, v, w, w, z)))
        kvw.append(a)
        kzv.append(b)
        rvwwz.append(c)
    out = {"K_ZV": _loglog_slope(rhos, kzv)}
    if model.d >= 2:
        out["K_VW"] = _loglog_slope(rhos, kvw)
        out["R_VWWZ"] = _loglog_slope(rhos, rvwwz)
    else:
        out["K_VW"] = None
        out["R_VWWZ"] = None
    out["values"] = {"rho": rhos.tolist(), "K_VW": kvw, "K_ZV": kzv, "R_VWWZ": rvwwz}
    return out
