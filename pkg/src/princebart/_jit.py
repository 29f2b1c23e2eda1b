"""Compilation switch for the numeric kernels.

Set ``PRINCE_BART_NUMBA=0`` in the environment before importing the package
to run every kernel through its pure-numpy path instead of numba.
"""

import math
import os

import numpy as np
from scipy import special

USE_NUMBA = os.environ.get("PRINCE_BART_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if USE_NUMBA:

    def jit(func):
        return numba.njit(cache=True)(func)

    # Acklam's rational approximation, polished with one Halley step
    _A = np.array([-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                   1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00])
    _B = np.array([-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                   6.680131188771972e+01, -1.328068155288572e+01])
    _C = np.array([-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                   -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00])
    _D = np.array([7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                   3.754408661907416e+00])

    @numba.njit(cache=True)
    def ndtri(p):
        if p <= 0.0:
            return -np.inf
        if p >= 1.0:
            return np.inf
        a, b, c, d = _A, _B, _C, _D
        if p < 0.02425:
            q = math.sqrt(-2.0 * math.log(p))
            x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
        elif p > 1.0 - 0.02425:
            q = math.sqrt(-2.0 * math.log1p(-p))
            x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
        else:
            q = p - 0.5
            r = q * q
            x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
                (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
        if p < 0.5:
            e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
        else:
            e = (1.0 - p) - 0.5 * math.erfc(x / math.sqrt(2.0))
        u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
        return x - u / (1.0 + 0.5 * x * u)

    @numba.njit(cache=True)
    def ndtr(x):
        return 0.5 * math.erfc(-x / math.sqrt(2.0))

else:

    def jit(func):
        return func

    def ndtri(p):
        return float(special.ndtri(p))

    def ndtr(x):
        return 0.5 * math.erfc(-x / math.sqrt(2.0))


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def vndtr(x):
    """Vectorized standard normal CDF (always numpy)."""
    return special.ndtr(np.asarray(x, dtype=float))


def vndtri(p):
    """Vectorized standard normal quantile (always numpy)."""
    return special.ndtri(np.asarray(p, dtype=float))
