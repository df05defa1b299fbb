"""Polynomial extrapolation to zero and power-law slope fits."""
import numpy as np


def extrapolate_zero(hs, values, degree=2):
    """Least-squares fit values ~ a + b h + c h^2 + ... and return (a, err).

    err is the difference to the fit of one degree lower, a crude error bar.
    """
    hs = np.asarray(hs, float)
    values = np.asarray(values, float)
    a = np.polynomial.polynomial.polyfit(hs, values, degree)[0]
    if degree >= 1 and hs.size > degree:
        b = np.polynomial.polynomial.polyfit(hs, values, degree - 1)[0]
        err = abs(a - b)
    else:
        err = np.nan
    return float(a), float(err)


def dyadic(h0, count=6):
    return h0 * 2.0 ** -np.arange(count)


def loglog_slope(xs, ys):
    xs = np.asarray(xs, float)
    ys = np.abs(np.asarray(ys, float))
    good = ys > 0
    if good.sum() < 2:
        return np.inf
    return float(np.polyfit(np.log(xs[good]), np.log(ys[good]), 1)[0])
