"""Symmetric scattering tensors, their lift to the cosphere bundle and gauge.

A field of order m and decay k is stored through reduced scattering-frame
coefficients F with f = rho^k F in the frame (d rho/rho^2, dy/rho). Keeping
rho^k outside lets every transform integrand be evaluated at rho = 0 without
dividing by zero.
"""
from __future__ import annotations

import itertools
from math import comb

import numpy as np
from scipy.integrate import solve_ivp

from ._smooth import cutoff
from .boundary import TrigPoly
from .geometry import ConicMetric, CollarBump, coordinate_jet, frame_scales


def symmetrize(T):
    """Average over all index permutations."""
    T = np.asarray(T, float)
    m = T.ndim
    if m < 2:
        return T.copy()
    perms = list(itertools.permutations(range(m)))
    return sum(np.transpose(T, p) for p in perms) / len(perms)


class SymTensorField:
    """Base class. Subclasses implement ``coeffs`` and optionally ``jet``."""

    def __init__(self, m, k, n, tangential=False):
        self.m, self.k, self.n = int(m), float(k), int(n)
        self.tangential = bool(tangential)

    def coeffs(self, rho, y):
        raise NotImplementedError

    def jet(self, rho, y):
        """(F, dF) with dF[a] the derivative along coordinate a of (rho, y)."""
        raise NotImplementedError

    def may_be_nonzero(self, rho, y):
        """Cheap support test; False only where the field certainly vanishes."""
        return True

    def components(self, rho, y):
        """Scattering-frame components rho^k F."""
        return rho**self.k * self.coeffs(rho, y)

    def vanishes_at_boundary(self, extra=0.0):
        """True when every lift term rho^(k+m-l+extra) has a positive exponent."""
        return self.k + extra > 0

    def __add__(self, other):
        return SumField([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return SumField([(1.0, self), (-1.0, other)])

    def __rmul__(self, c):
        return SumField([(float(c), self)])


class SumField(SymTensorField):
    def __init__(self, parts):
        m = {p.m for _, p in parts}
        n = {p.n for _, p in parts}
        if len(m) != 1 or len(n) != 1:
            raise ValueError("summands must share order and dimension")
        k = min(p.k for _, p in parts)
        super().__init__(m.pop(), k, n.pop(), all(p.tangential for _, p in parts))
        self.parts = parts

    def coeffs(self, rho, y):
        out = 0.0
        for c, p in self.parts:
            out = out + c * rho ** (p.k - self.k) * p.coeffs(rho, y)
        return out

    def vanishes_at_boundary(self, extra=0.0):
        return all(p.vanishes_at_boundary(extra) for _, p in self.parts)

    def may_be_nonzero(self, rho, y):
        return any(p.may_be_nonzero(rho, y) for _, p in self.parts)


class FunctionField(SymTensorField):
    """Field given by a callable returning reduced coefficients (optionally a jet)."""

    def __init__(self, m, k, n, fn, jet_fn=None, tangential=False):
        super().__init__(m, k, n, tangential)
        self.fn, self.jet_fn = fn, jet_fn

    def coeffs(self, rho, y):
        return np.asarray(self.fn(rho, np.atleast_1d(y)), float)

    def jet(self, rho, y):
        if self.jet_fn is None:
            raise NotImplementedError("no jet supplied")
        F, dF = self.jet_fn(rho, np.atleast_1d(y))
        return np.asarray(F, float), np.asarray(dF, float)


class CollarField(SymTensorField):
    """f = rho^k * sum_I a_I(y) exp(-rho^2) e^I with trigonometric a_I.

    ``terms`` maps index tuples (0 = transversal, i >= 1 tangential) to
    TrigPoly coefficients; the tensor is symmetrized.
    """

    def __init__(self, m, k, n, terms, width=1.0):
        tang = all(0 not in idx for idx in terms)
        super().__init__(m, k, n, tang)
        self.terms = {tuple(i): (a if isinstance(a, TrigPoly) else TrigPoly.make(a)) for i, a in terms.items()}
        self.width = float(width)
        self._perms = {idx: sorted(set(itertools.permutations(idx))) for idx in self.terms}

    def _radial(self, rho):
        e = np.exp(-((rho / self.width) ** 2))
        return e, -2 * rho / self.width**2 * e

    def jet(self, rho, y):
        n, m = self.n, self.m
        F = np.zeros((n,) * m)
        dF = np.zeros((n,) + (n,) * m)
        e, de = self._radial(rho)
        for idx, a in self.terms.items():
            v, g, _ = a.jet(np.atleast_1d(y))
            perms = self._perms[idx]
            w = 1.0 / len(perms)
            for p in perms:
                F[p] += w * v * e
                dF[(0,) + p] += w * v * de
                for j in range(n - 1):
                    dF[(j + 1,) + p] += w * g[j] * e
        return F, dF

    def coeffs(self, rho, y):
        return self.jet(rho, y)[0]

    def component_jet(self, idx, rhos, y):
        """F_idx and its derivatives at many radii (same y)."""
        rhos = np.atleast_1d(np.asarray(rhos, float))
        key = tuple(sorted(idx))
        a = self.terms.get(key)
        n = self.n
        if a is None:
            return np.zeros(rhos.size), np.zeros((n, rhos.size))
        v, g, _ = a.jet(np.atleast_1d(y))
        e, de = self._radial(rhos)
        F = v * e
        dF = np.empty((n, rhos.size))
        dF[0] = v * de
        dF[1:] = np.outer(g, e)
        return F, dF


class BumpField(SymTensorField):
    """Compactly supported field B(rho, y) C with constant frame components C."""

    def __init__(self, bump: CollarBump, C):
        C = symmetrize(C)
        super().__init__(C.ndim, 0.0, C.shape[0] if C.ndim else bump.y_c.size + 1)
        self.bump, self.C = bump, C

    def coeffs(self, rho, y):
        return self.bump.jet(rho, np.atleast_1d(y))[0] * self.C

    def jet(self, rho, y):
        v, g, _ = self.bump.jet(rho, np.atleast_1d(y))
        return v * self.C, np.multiply.outer(g, self.C)

    def vanishes_at_boundary(self, extra=0.0):
        return True

    def may_be_nonzero(self, rho, y):
        return self.bump.contains(rho, y)


class FrameTensorField(SymTensorField):
    """Wraps an object with ``frame_jet`` (e.g. a tensor bump) as an order-2 field."""

    def __init__(self, obj, n, compact=True):
        super().__init__(2, 0.0, n)
        self.obj, self.compact = obj, compact

    def coeffs(self, rho, y):
        return self.obj.frame_jet(rho, np.atleast_1d(y), order=1)[0]

    def jet(self, rho, y):
        Q, dQ, _ = self.obj.frame_jet(rho, np.atleast_1d(y), order=1)
        return Q, dQ

    def vanishes_at_boundary(self, extra=0.0):
        return self.compact

    def may_be_nonzero(self, rho, y):
        b = getattr(self.obj, "bump", None)
        return True if b is None else b.contains(rho, y)


# ---------------------------------------------------------------------------
# lift


def _tangential_contractions(F, w0, wt, m):
    """T_l = F[0^l, tangential...](wt, ..., wt) for l = 0..m."""
    out = []
    for l in range(m + 1):
        T = F
        for _ in range(l):
            T = T[0]
        for _ in range(m - l):
            T = T[1:] @ wt if T.ndim == 1 else np.tensordot(wt, T[1:], axes=(0, 0))
        out.append(float(T))
    return out


def lift_terms(f: SymTensorField, rho, y, w0, wt, extra=0.0):
    """sum_l C(m,l) rho^(k+m-l+extra) w0^l T_l, the weighted lift.

    (w0, wt) are d rho/d tau and dy/d tau; the scattering-frame components of
    the dual vector are (w0, rho wt).
    """
    m = f.m
    F = f.coeffs(rho, y)
    if m == 0:
        p = f.k + extra
        if rho == 0.0:
            if F == 0 or p > 0:
                return 0.0
            return float(F) if p == 0 else np.inf
        return rho**p * float(F)
    T = _tangential_contractions(F, w0, np.asarray(wt, float), m)
    total = 0.0
    for l in range(m + 1):
        if T[l] == 0.0:
            continue
        p = f.k + m - l + extra
        if rho == 0.0:
            if p > 0:
                continue
            if p < 0:
                return np.inf
            total += comb(m, l) * w0**l * T[l]
        else:
            total += comb(m, l) * rho**p * w0**l * T[l]
    return total


def _lift_from_field(f, model, z, fld, extra):
    d = model.d
    rho = z[0]
    y = z[1:1 + d]
    if not f.may_be_nonzero(rho, y):
        return 0.0
    if rho == 0.0 and f.vanishes_at_boundary(extra):
        return 0.0
    return lift_terms(f, rho, y, fld[0], fld[1:1 + d], extra)


def lift(f: SymTensorField, model: ConicMetric, z):
    """f(xi#, ..., xi#) at the phase point z (xi# the dual unit vector)."""
    from .dynamics import rescaled_field

    fld = rescaled_field(model, np.asarray(z, float))
    return _lift_from_field(f, model, np.asarray(z, float), fld, 0.0)


def xray_integrand(f: SymTensorField, model: ConicMetric, extra=-2.0):
    """Integrand rho^extra pi*f as an accumulator for ``dynamics.integrate``."""
    return lambda z, fld: _lift_from_field(f, model, z, fld, extra)


# ---------------------------------------------------------------------------
# symmetrized covariant derivative


_last_christoffel = [None, None, None]


def christoffel(model: ConicMetric, rho, y):
    """Gamma^a_bc in coordinates (rho, y)."""
    # several fields along one trajectory ask for the same point in a row
    key = (float(rho), tuple(np.atleast_1d(y).tolist()))
    if _last_christoffel[0] is model and _last_christoffel[1] == key:
        return _last_christoffel[2]
    g, dg, _ = coordinate_jet(model, rho, y)
    ginv = np.linalg.inv(g)
    gam1 = 0.5 * (np.einsum("bdc->dbc", dg) + np.einsum("cdb->dbc", dg) - dg)
    out = np.einsum("ad,dbc->abc", ginv, gam1), g
    _last_christoffel[:] = [model, key, out]
    return out


class DerivedField(SymTensorField):
    """D u = symmetrized covariant derivative of a field u of order 0 or 1.

    Components are assembled in coordinates from u's jet and the model's
    Christoffel symbols, then returned in the scattering frame. The result is
    reported with decay 0; ``decay`` declares how fast it vanishes at the
    boundary so that lifts can be evaluated on the faces.
    """

    def __init__(self, model: ConicMetric, u: SymTensorField, decay=0.0):
        if u.m > 1:
            raise ValueError("D is implemented for orders 0 and 1")
        super().__init__(u.m + 1, 0.0, model.n)
        self.model, self.u, self.decay = model, u, float(decay)

    def vanishes_at_boundary(self, extra=0.0):
        return self.decay + extra > 0 or self.u.vanishes_at_boundary(-10.0)

    def may_be_nonzero(self, rho, y):
        return self.u.may_be_nonzero(rho, y)

    def coeffs(self, rho, y):
        y = np.atleast_1d(y)
        n = self.n
        s = frame_scales(rho, n)
        ds0 = np.zeros(n)
        ds0[0] = 2 * rho
        ds0[1:] = 1.0
        U, dU = self.u.jet(rho, y)
        if not (np.any(U) or np.any(dU)):
            return np.zeros((n,) * self.m)
        k = self.u.k
        pk = rho**k
        # derivatives of the scattering-frame components rho^k U
        du_sc = pk * dU
        du_sc[0] = du_sc[0] + (k * rho ** (k - 1) * U if k else 0.0)
        u_sc = pk * U
        if self.u.m == 0:
            grad = du_sc  # d_a u in coordinates
            return grad * s
        # coordinate components u_a = u_sc_a / s_a
        u_c = u_sc / s
        du_c = du_sc / s[None, :]
        du_c[0] = du_c[0] - u_sc * ds0 / s**2
        gam, _ = christoffel(self.model, rho, y)
        sym = 0.5 * (du_c + du_c.T) - np.einsum("cab,c->ab", gam, u_c)
        return sym * np.outer(s, s)


def sym_derivative(model: ConicMetric, u: SymTensorField, decay=0.0):
    return DerivedField(model, u, decay)


# ---------------------------------------------------------------------------
# gauge normalization

_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class ScalarPotential(SymTensorField):
    """q0(rho, y) = int_0^rho s^-2 f0(s, y) ds with f0 = rho^k F0.

    Written as rho^(k-1) int_0^1 u^(k-2) F0(rho u, y) du and evaluated by
    Gauss-Legendre quadrature, so it stays regular at rho = 0.
    """

    def __init__(self, f0_jet, k, n):
        if k <= 1:
            raise ValueError("transversal part must decay faster than rho")
        super().__init__(0, k - 1, n)
        self.f0_jet = f0_jet

    def jet(self, rho, y):
        y = np.atleast_1d(y)
        kk = self.k + 1
        F0, dF0 = self.f0_jet(rho * _GL_X, y)
        wt = _GL_W * _GL_X ** (kk - 2)
        g = np.zeros(self.n)
        g[0] = np.sum(wt * _GL_X * dF0[0])
        g[1:] = dF0[1:] @ wt
        return np.asarray(np.sum(wt * F0)), g

    def coeffs(self, rho, y):
        return self.jet(rho, y)[0]


class GaugeResult:
    def __init__(self, potential, residual, transversal_max):
        self.potential = potential
        self.residual = residual
        self.transversal_max = transversal_max


def _component_jet(field: SymTensorField, idx):
    """Vectorized (over rho) jet of one component: returns F (N,), dF (n, N)."""
    if isinstance(field, CollarField):
        return lambda rhos, y: field.component_jet(idx, rhos, y)

    def jet(rhos, y):
        vals, ders = [], []
        for r in np.atleast_1d(rhos):
            F, dF = field.jet(r, y)
            vals.append(F[idx])
            ders.append(dF[(slice(None),) + idx])
        return np.array(vals), np.array(ders).T

    return jet


class OneFormPotential:
    """u = q0 d rho/rho^2 + (tangential 1-form) solving the order-2 gauge ODE.

    The tangential part is P = rho^2 u_tan (coordinate components) with
    dP/d rho = S^T P + 2 rho^(k-1) G, P(0) = 0, S = h^-1 d_rho h,
    G = F_0i - (1/2) d_i Q where q0 = rho^(k-1) Q.
    """

    def __init__(self, model: ConicMetric, f: SymTensorField):
        self.model, self.f = model, f
        self.k = f.k
        self.q0 = ScalarPotential(_component_jet(f, (0, 0)), f.k, model.n)
        self.rho_cap = 0.6
        self._cache = {}

    def _forcing(self, rho, y):
        d = self.model.d
        F, _ = self.f.jet(rho, y)
        _, dQ = self.q0.jet(rho, y)
        return F[0, 1:1 + d] - 0.5 * dQ[1:]

    def _solution(self, y):
        key = tuple(np.round(y, 15))
        sol = self._cache.get(key)
        if sol is None:
            d = self.model.d
            k = self.k

            def rhs(r, P):
                h, dh, _ = self.model.h_jet(r, y, order=1)
                S = np.linalg.solve(h, dh[0])
                return S.T @ P + 2 * r ** (k - 1) * self._forcing(r, y)

            sol = solve_ivp(rhs, (0.0, self.rho_cap), np.zeros(d), method="DOP853",
                            rtol=1e-12, atol=1e-15, dense_output=True).sol
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[key] = sol
        return sol

    def tangential_P(self, rho, y):
        y = np.atleast_1d(np.asarray(y, float))
        if rho == 0:
            return np.zeros(self.model.d)
        if rho > self.rho_cap:
            raise ValueError("outside the collar handled by the gauge ODE")
        return self._solution(y)(rho)

    def sc_components(self, rho, y):
        """Scattering-frame components (q0, rho u_tan) = (q0, P/rho)."""
        y = np.atleast_1d(y)
        out = np.zeros(self.model.n)
        out[0] = rho ** self.q0.k * float(self.q0.coeffs(rho, y))
        out[1:] = self.tangential_P(rho, y) / rho
        return out


def _fd_jet(fn, rho, y, h=1e-3):
    """Value and first derivatives by fourth-order central differences."""
    y = np.atleast_1d(np.asarray(y, float))
    v = np.asarray(fn(rho, y), float)
    n = y.size + 1
    g = np.zeros((n,) + v.shape)
    c = np.array([1, -8, 8, -1]) / 12.0
    off = np.array([-2, -1, 1, 2])
    for a in range(n):
        acc = 0.0
        for ci, o in zip(c, off):
            if a == 0:
                acc = acc + ci * np.asarray(fn(rho + o * h, y))
            else:
                yy = y.copy()
                yy[a - 1] += o * h
                acc = acc + ci * np.asarray(fn(rho, yy))
        g[a] = acc / h
    return v, g


def transversal_residual(model: ConicMetric, f: SymTensorField, u_sc, rho, y):
    """Components (f - D u)_{0a} in the scattering frame at (rho, y).

    u_sc(rho, y) returns scattering-frame components of the potential (a
    scalar for m = 1, a 1-form for m = 2). Derivatives of u are taken by
    finite differences and D u uses the generic Christoffel symbols, so this
    check is independent of the formulas used to build u.
    """
    n = model.n
    s = frame_scales(rho, n)
    fs = f.components(rho, y)
    if f.m == 1:
        _, g = _fd_jet(lambda r, yy: np.asarray(u_sc(r, yy)), rho, y)
        du = np.asarray(g).reshape(n) * s
        return fs[0] - du[0], fs - du

    def u_coord(r, yy):
        return np.asarray(u_sc(r, yy)) / frame_scales(r, n)

    uc, duc = _fd_jet(u_coord, rho, y)
    gam, _ = christoffel(model, rho, np.atleast_1d(y))
    Du = 0.5 * (duc + duc.T) - np.einsum("cab,c->ab", gam, uc)
    Du_sc = Du * np.outer(s, s)
    res = fs - Du_sc
    return res[0], res


def gauge_normalize(model: ConicMetric, f: SymTensorField, sample_points=()):
    """Potential u with iota_{rho^2 d_rho}(f - D u) = 0 near the boundary (m = 1, 2)."""
    if f.m not in (1, 2):
        raise ValueError("gauge normalization is implemented for m = 1, 2")
    if f.k < 2:
        raise ValueError("need decay k >= 2")
    if f.m == 1:
        q0 = ScalarPotential(_component_jet(f, (0,)), f.k, model.n)
        u_sc = lambda r, yy: r ** q0.k * float(q0.coeffs(r, yy))
        potential = q0
    else:
        if f.k < 3:
            raise ValueError("order-2 gauge needs decay k >= 3")
        potential = OneFormPotential(model, f)
        u_sc = potential.sc_components
    worst = 0.0
    for rho, y in sample_points:
        r0, _ = transversal_residual(model, f, u_sc, rho, y)
        worst = max(worst, float(np.max(np.abs(r0))))
    return GaugeResult(potential, u_sc, worst)
