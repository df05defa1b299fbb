"""Radial warping profiles f(r) for warped products dr^2 + f(r)^2 h."""
from __future__ import annotations

import numpy as np


class RadialProfile:
    """f(r) = r on [0, r0], a C^2 quartic bridge on [r0, r1], a*r + b beyond r1.

    The bridge has f' = 1 + (a - 1)(3t^2 - 2t^3), so f'' has the sign of a - 1
    throughout: convex for a > 1, concave for a < 1.
    """

    def __init__(self, a=1.0, r0=1.0, r1=2.0):
        if not (0 < r0 < r1):
            raise ValueError("need 0 < r0 < r1")
        if a <= 0:
            raise ValueError("asymptotic slope must be positive")
        self.a, self.r0, self.r1 = float(a), float(r0), float(r1)
        self.f1 = self.r0 + (self.r1 - self.r0) * (1 + self.a) / 2
        self.b = self.f1 - self.a * self.r1

    @classmethod
    def euclidean(cls):
        return cls(1.0, 1.0, 2.0)

    def jet(self, r):
        """Return f, f', f'', f''' at r."""
        a, r0, r1 = self.a, self.r0, self.r1
        if r <= r0:
            return r, 1.0, 0.0, 0.0
        if r >= r1:
            return a * r + self.b, a, 0.0, 0.0
        w = r1 - r0
        t = (r - r0) / w
        k = a - 1.0
        f = r0 + w * (t + k * (t**3 - 0.5 * t**4))
        df = 1.0 + k * (3 * t**2 - 2 * t**3)
        ddf = k * (6 * t - 6 * t**2) / w
        dddf = k * (6 - 12 * t) / w**2
        return f, df, ddf, dddf

    def psi_jet(self, rho):
        """psi(rho) = rho f(1/rho) with its first two rho-derivatives."""
        if rho <= 1.0 / self.r1:
            return self.a + self.b * rho, self.b, 0.0
        if rho >= 1.0 / self.r0:
            return 1.0, 0.0, 0.0
        r = 1.0 / rho
        f, df, ddf, _ = self.jet(r)
        return f / r, f - r * df, r**3 * ddf

    def gauss(self, r):
        """Curvature of radial planes, -f''/f."""
        f, _, ddf, _ = self.jet(r)
        return -ddf / f

    def tangential(self, r):
        """Curvature of planes tangent to the level spheres, (1 - f'^2)/f^2."""
        f, df, _, _ = self.jet(r)
        return (1 - df * df) / (f * f)

    def __repr__(self):
        return f"RadialProfile(a={self.a!r}, r0={self.r0!r}, r1={self.r1!r})"
