"""Lanczos approximation of the gamma function on (0, 30]."""

import math

import numpy as np

# g = 7, n = 9 coefficient set (Godfrey)
_G = 7.0
_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

GAMMA_MAX_ARG = 30.0


def _lanczos(z):
    # valid for z >= 1/2; callers shift smaller arguments with the recurrence
    z = z - 1.0
    acc = _COEF[0]
    for k in range(1, len(_COEF)):
        acc = acc + _COEF[k] / (z + k)
    t = z + _G + 0.5
    return _SQRT_2PI * t ** (z + 0.5) * np.exp(-t) * acc


def gamma(x):
    """Gamma function for real ``x`` in (0, 30], scalar or array."""
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError("gamma is only defined here for 0 < x <= 30")
    if np.any(arr > GAMMA_MAX_ARG):
        raise ValueError("gamma argument above 30 is outside the supported range")
    # Gamma(x) = Gamma(x + 1) / x keeps the Lanczos sum in its accurate range
    small = arr < 1.0
    shifted = np.where(small, arr + 1.0, arr)
    out = _lanczos(shifted)
    out = np.where(small, out / arr, out)
    if np.ndim(x) == 0:
        return float(out)
    return out
