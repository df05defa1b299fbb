"""Polynomial cutoffs and bumps with closed-form derivatives (C^3)."""
import numpy as np


def smoothstep(x):
    """Septic smoothstep: 0 for x<=0, 1 for x>=1. Returns (S, S', S'')."""
    t = np.clip(x, 0.0, 1.0)
    s = t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)
    inside = (x > 0) & (x < 1)
    ds = np.where(inside, 140 * t**3 * (1 - t) ** 3, 0.0)
    dds = np.where(inside, 420 * t**2 * (1 - t) ** 2 * (1 - 2 * t), 0.0)
    return s, ds, dds


def cutoff(rho, a, b):
    """1 for rho<=a, 0 for rho>=b. Returns value and two derivatives."""
    w = b - a
    s, ds, dds = smoothstep((rho - a) / w)
    return 1.0 - s, -ds / w, -dds / w**2


def bump(s):
    """(1-s^2)^4 on |s|<1, zero outside. Returns value and two derivatives."""
    u = 1.0 - s * s
    inside = u > 0
    u = np.where(inside, u, 0.0)
    v = u**4
    dv = -8.0 * s * u**3
    ddv = -8.0 * u**3 + 48.0 * s * s * u**2
    return v, np.where(inside, dv, 0.0), np.where(inside, ddv, 0.0)
