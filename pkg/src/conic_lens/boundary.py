"""Closed boundary manifolds (circle, round sphere, flat torus) in angle coordinates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TrigPoly:
    """Scalar s(y) = sum amp * cos(k.y + phase) with integer wave vectors."""

    amps: tuple
    waves: tuple
    phases: tuple

    @classmethod
    def make(cls, terms):
        amps, waves, phases = [], [], []
        for t in terms:
            amp, k = t[0], t[1]
            phase = t[2] if len(t) > 2 else 0.0
            amps.append(float(amp))
            waves.append(tuple(float(v) for v in np.atleast_1d(k)))
            phases.append(float(phase))
        return cls(tuple(amps), tuple(waves), tuple(phases))

    @classmethod
    def constant(cls, c, d):
        return cls.make([(c, np.zeros(d))])

    def jet(self, y):
        y = np.atleast_1d(np.asarray(y, float))
        K = np.array(self.waves, float).reshape(len(self.amps), -1)
        amps = np.array(self.amps)
        arg = K @ y + np.array(self.phases)
        c = amps * np.cos(arg)
        sn = amps * np.sin(arg)
        return float(c.sum()), -(sn @ K), -(K.T * c) @ K

    def __call__(self, y):
        return self.jet(y)[0]


class Boundary:
    """Base class. Coordinates y have dimension d; h0 is the boundary metric."""

    kind = "abstract"
    d = 0

    def metric_jet(self, y):
        raise NotImplementedError

    def metric(self, y):
        return self.metric_jet(y)[0]

    def norm(self, y, eta):
        h = self.metric(y)
        eta = np.atleast_1d(eta)
        return float(np.sqrt(eta @ np.linalg.solve(h, eta)))

    def hamilton_field(self, y, eta):
        """(dy/ds, deta/ds) for the Hamiltonian |eta|^2/2 of h0."""
        h, dh, _ = self.metric_jet(y)
        hinv = np.linalg.inv(h)
        eta = np.atleast_1d(np.asarray(eta, float))
        u = hinv @ eta
        deta = 0.5 * np.einsum("kij,i,j->k", dh, u, u)
        return u, deta

    def flow(self, y, eta, s):
        raise NotImplementedError

    def difference(self, y1, y2):
        """y1 - y2 reduced to the principal period where coordinates are angles."""
        raise NotImplementedError

    def gauss_curvature(self):
        return 0.0


class Circle(Boundary):
    kind = "circle"
    d = 1

    def __init__(self, length=2 * np.pi):
        self.length = float(length)
        self.c = self.length / (2 * np.pi)

    def metric_jet(self, y):
        return (np.array([[self.c**2]]), np.zeros((1, 1, 1)), np.zeros((1, 1, 1, 1)))

    def flow(self, y, eta, s):
        y = np.atleast_1d(np.asarray(y, float))
        eta = np.atleast_1d(np.asarray(eta, float))
        return y + s * eta / self.c**2, eta.copy()

    def difference(self, y1, y2):
        return np.angle(np.exp(1j * (np.atleast_1d(y1) - np.atleast_1d(y2))))

    @property
    def scale(self):
        return self.c

    def __repr__(self):
        return f"Circle(length={self.length!r})"


class Torus(Boundary):
    kind = "torus"
    d = 2

    def __init__(self, lengths=(2 * np.pi, 2 * np.pi)):
        self.lengths = tuple(float(v) for v in lengths)
        self.c = np.array(self.lengths) / (2 * np.pi)

    def metric_jet(self, y):
        return (np.diag(self.c**2), np.zeros((2, 2, 2)), np.zeros((2, 2, 2, 2)))

    def flow(self, y, eta, s):
        y = np.asarray(y, float)
        eta = np.asarray(eta, float)
        return y + s * eta / self.c**2, eta.copy()

    def difference(self, y1, y2):
        return np.angle(np.exp(1j * (np.asarray(y1) - np.asarray(y2))))

    def __repr__(self):
        return f"Torus(lengths={self.lengths!r})"


class Sphere(Boundary):
    """Round sphere of radius R, y = (polar angle, azimuth)."""

    kind = "sphere"
    d = 2

    def __init__(self, radius=1.0):
        self.radius = float(radius)

    @property
    def scale(self):
        return self.radius

    def metric_jet(self, y):
        th = y[0]
        r2 = self.radius**2
        s, c = np.sin(th), np.cos(th)
        h = np.diag([r2, r2 * s * s])
        dh = np.zeros((2, 2, 2))
        dh[0, 1, 1] = r2 * 2 * s * c
        ddh = np.zeros((2, 2, 2, 2))
        ddh[0, 0, 1, 1] = r2 * 2 * np.cos(2 * th)
        return h, dh, ddh

    def gauss_curvature(self):
        return 1.0 / self.radius**2

    @staticmethod
    def _frame(th, ph):
        u = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        e_th = np.array([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
        e_ph = np.array([-np.sin(ph), np.cos(ph), 0.0])
        return u, e_th, e_ph

    def flow(self, y, eta, s):
        th, ph = float(y[0]), float(y[1])
        r2 = self.radius**2
        u, e_th, e_ph = self._frame(th, ph)
        st = np.sin(th)
        # angular velocity on the unit sphere
        vel = e_th * eta[0] / r2 + e_ph * eta[1] / (r2 * st)
        w = np.linalg.norm(vel)
        if w == 0:
            return np.array([th, ph]), np.asarray(eta, float).copy()
        vh = vel / w
        u1 = u * np.cos(w * s) + vh * np.sin(w * s)
        du1 = w * (-u * np.sin(w * s) + vh * np.cos(w * s))
        th1 = np.arccos(np.clip(u1[2], -1.0, 1.0))
        ph1 = np.arctan2(u1[1], u1[0])
        # keep the azimuth continuous with the starting value
        ph1 = ph + np.angle(np.exp(1j * (ph1 - ph)))
        _, f_th, f_ph = self._frame(th1, ph1)
        dth = du1 @ f_th
        dph_s = du1 @ f_ph
        st1 = np.sin(th1)
        eta1 = np.array([r2 * dth, r2 * st1 * dph_s])
        return np.array([th1, ph1]), eta1

    def difference(self, y1, y2):
        y1 = np.asarray(y1, float)
        y2 = np.asarray(y2, float)
        return np.array([y1[0] - y2[0], np.angle(np.exp(1j * (y1[1] - y2[1])))])

    def distance(self, y1, y2):
        u1 = self._frame(*y1)[0]
        u2 = self._frame(*y2)[0]
        return self.radius * np.arctan2(np.linalg.norm(np.cross(u1, u2)), u1 @ u2)

    def __repr__(self):
        return f"Sphere(radius={self.radius!r})"


def make_boundary(kind, **kw):
    kind = kind.lower()
    if kind == "circle":
        return Circle(kw.get("length", 2 * np.pi))
    if kind == "sphere":
        return Sphere(kw.get("radius", 1.0))
    if kind == "torus":
        return Torus(tuple(kw.get("lengths", (2 * np.pi, 2 * np.pi))))
    raise ValueError(f"unknown boundary kind {kind!r}")
