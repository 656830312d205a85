"""Pure numpy kernels for log-gamma, digamma and trigamma.

Fallback used when the compiled extension is unavailable (or disabled via
EDLAB_PURE=1).  Same algorithms as the C version: Lanczos approximation for
log-gamma, upward recurrence into the asymptotic Bernoulli series for
digamma/trigamma.  Inputs must be positive; callers validate.
"""

from __future__ import annotations

import numpy as np

_HALF_LOG_2PI = 0.9189385332046727417803297364056176

# Lanczos g=7, n=9 coefficients (double precision, rel. err ~1e-15).
_LANCZOS_G = 7.0
_LANCZOS_C = np.array(
    [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ]
)

# B_{2n}/(2n) for the digamma asymptotic series in 1/x^2.
_PSI_COEF = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

# B_{2n} for the trigamma asymptotic series in 1/x^2 (times 1/x^3 lead).
_PSI1_COEF = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)

_PSI_SWITCH = 6.0
_PSI1_SWITCH = 8.0


def _lanczos_lgamma(z):
    # valid and accurate for z >= 0.5
    acc = np.full_like(z, _LANCZOS_C[0])
    for i in range(1, 9):
        acc = acc + _LANCZOS_C[i] / (z - 1.0 + i)
    t = z + _LANCZOS_G - 0.5
    return _HALF_LOG_2PI + (z - 0.5) * np.log(t) - t + np.log(acc)


def lgamma(x):
    x = np.asarray(x, dtype=np.float64)
    small = x < 0.5
    if np.any(small):
        out = np.empty_like(x)
        xs = x[small]
        # lgamma(z) = lgamma(z+1) - log z keeps small arguments accurate
        out[small] = _lanczos_lgamma(xs + 1.0) - np.log(xs)
        out[~small] = _lanczos_lgamma(x[~small])
        return out
    return _lanczos_lgamma(x)


def digamma(x):
    x = np.asarray(x, dtype=np.float64).copy()
    out = np.zeros_like(x)
    # shift into the asymptotic regime: psi(x) = psi(x+1) - 1/x
    mask = x < _PSI_SWITCH
    while np.any(mask):
        out[mask] -= 1.0 / x[mask]
        x[mask] += 1.0
        mask = x < _PSI_SWITCH
    r = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in reversed(_PSI_COEF):
        series = (series + c) * r
    return out + np.log(x) - 0.5 / x - series


def trigamma(x):
    x = np.asarray(x, dtype=np.float64).copy()
    out = np.zeros_like(x)
    # psi'(x) = psi'(x+1) + 1/x^2
    mask = x < _PSI1_SWITCH
    while np.any(mask):
        out[mask] += 1.0 / (x[mask] * x[mask])
        x[mask] += 1.0
        mask = x < _PSI1_SWITCH
    r = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in reversed(_PSI1_COEF):
        series = (series + c) * r
    return out + 1.0 / x + 0.5 * r + series / x
