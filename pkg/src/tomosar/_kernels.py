"""Scalar numba helpers for the echo and focusing inner loops.

libm ``atan2``/``sin``/``cos`` dominate the per-sample cost on small
machines. Phases use a branch-free reduced polynomial (error < 1e-8 for
arguments up to ~1e5 rad); the antenna pattern is tabulated against the
tangent of the off-boresight angle, which the geometry gives directly.
"""

import math

import numba as nb
import numpy as np

_INV_TWO_PI = 1.0 / (2.0 * math.pi)
# 2*pi split in two parts for the reduction
_TWO_PI_HI = 6.283185307179586
_TWO_PI_LO = 2.4492935982947064e-16

PATTERN_SAMPLES = 8193


@nb.njit(cache=True, inline="always")
def fast_sincos(x):
    """(sin x, cos x) via reduction to [-pi, pi] and half-angle polynomials."""
    n = math.floor(x * _INV_TWO_PI + 0.5)
    h = 0.5 * ((x - n * _TWO_PI_HI) - n * _TWO_PI_LO)
    h2 = h * h
    s = h * (1.0 + h2 * (-1.0 / 6 + h2 * (1.0 / 120 + h2 * (-1.0 / 5040 + h2 * (
        1.0 / 362880 + h2 * (-1.0 / 39916800 + h2 * (1.0 / 6227020800 + h2 * (
            -1.0 / 1307674368000))))))))
    c = 1.0 + h2 * (-0.5 + h2 * (1.0 / 24 + h2 * (-1.0 / 720 + h2 * (1.0 / 40320 + h2 * (
        -1.0 / 3628800 + h2 * (1.0 / 479001600 + h2 * (-1.0 / 87178291200 + h2 * (
            1.0 / 20922789888000))))))))
    return 2.0 * s * c, c * c - s * s


def pattern_table(aperture_rad: float, n: int = PATTERN_SAMPLES):
    """Samples of cos^2(pi/2 * atan(t) / aperture) on t in [-tan(a), tan(a)].

    Returns (table, t_max). Apertures of 90 degrees or more are clipped to
    just below 90 so the tangent stays finite.
    """
    a = min(aperture_rad, 0.5 * math.pi - 1e-6)
    t_max = math.tan(a)
    t = np.linspace(-t_max, t_max, n)
    theta = np.abs(np.arctan(t))
    table = np.where(theta < aperture_rad, np.cos(0.5 * np.pi * theta / aperture_rad) ** 2, 0.0)
    return table, t_max


@nb.njit(cache=True, inline="always")
def table_lookup(t, table, t_max):
    if t <= -t_max or t >= t_max:
        return 0.0
    x = (t + t_max) * ((table.shape[0] - 1) / (2.0 * t_max))
    i = int(x)
    if i >= table.shape[0] - 1:
        return table[table.shape[0] - 1]
    f = x - i
    return table[i] * (1.0 - f) + table[i + 1] * f
