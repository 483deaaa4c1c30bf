"""Independent reference computations used to check the metric code."""

import numpy as np
from scipy.optimize import brentq

from evpkit.curve import validate

FINE_POINTS = 100_001


def random_curve(rng, monotone=None):
    """A random piecewise-linear curve and a threshold to go with it."""
    n = int(rng.integers(3, 16))
    eps = np.concatenate([[0.0], np.cumsum(rng.uniform(0.02, 0.5, n - 1))])
    acc = rng.uniform(0.0, 1.0, n)
    if monotone is None:
        monotone = rng.uniform() < 0.5
    if monotone:
        acc = np.sort(acc)[::-1]
    tau = float(rng.uniform(0.05, 0.95))
    return validate(list(zip(eps, acc))), tau


def first_crossing(curve, tau):
    """Where the interpolant first drops below tau, by dense scan + brentq."""
    eps, acc = curve.arrays()
    f = lambda e: np.interp(e, eps, acc) - tau
    if f(0.0) < 0:
        return 0.0
    grid = np.linspace(0.0, eps[-1], FINE_POINTS)
    grid = np.union1d(grid, eps)
    below = np.flatnonzero(f(grid) < 0)
    if below.size == 0:
        return float(eps[-1])
    j = below[0]
    lo, hi = grid[j - 1], grid[j]
    if f(lo) == 0:
        return float(lo)
    return float(brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def dense_integral(curve, lo, hi, baseline=None):
    """Fine-grid trapezoid of the interpolant (minus a clipped baseline)."""
    if hi <= lo:
        return 0.0
    eps, acc = curve.arrays()
    x = np.linspace(lo, hi, FINE_POINTS)
    y = np.interp(x, eps, acc)
    if baseline is not None:
        y = np.maximum(y - baseline, 0.0)
    return float(np.trapezoid(y, x))
