# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for log-gamma, digamma and trigamma over double arrays.

Mirrors _specfn_py exactly: Lanczos g=7 for log-gamma, recurrence into the
Bernoulli asymptotic series for digamma/trigamma.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log

cnp.import_array()

cdef double HALF_LOG_2PI = 0.9189385332046727417803297364056176
cdef double LANCZOS_G = 7.0
cdef double[9] LANCZOS_C = [
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

cdef double[7] PSI_COEF = [
    1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0,
    1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0,
]
cdef double[7] PSI1_COEF = [
    1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0,
    5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0,
]


cdef inline double _lanczos(double z) noexcept nogil:
    cdef double acc = LANCZOS_C[0]
    cdef int i
    for i in range(1, 9):
        acc += LANCZOS_C[i] / (z - 1.0 + i)
    cdef double t = z + LANCZOS_G - 0.5
    return HALF_LOG_2PI + (z - 0.5) * log(t) - t + log(acc)


cdef inline double _lgamma1(double x) noexcept nogil:
    if x < 0.5:
        return _lanczos(x + 1.0) - log(x)
    return _lanczos(x)


cdef inline double _digamma1(double x) noexcept nogil:
    cdef double out = 0.0
    cdef double r, series
    cdef int i
    while x < 6.0:
        out -= 1.0 / x
        x += 1.0
    r = 1.0 / (x * x)
    series = 0.0
    for i in range(6, -1, -1):
        series = (series + PSI_COEF[i]) * r
    return out + log(x) - 0.5 / x - series


cdef inline double _trigamma1(double x) noexcept nogil:
    cdef double out = 0.0
    cdef double r, series
    cdef int i
    while x < 8.0:
        out += 1.0 / (x * x)
        x += 1.0
    r = 1.0 / (x * x)
    series = 0.0
    for i in range(6, -1, -1):
        series = (series + PSI1_COEF[i]) * r
    return out + 1.0 / x + 0.5 * r + series / x


def lgamma(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] xv = arr.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = _lgamma1(xv[i])
    return out


def digamma(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] xv = arr.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = _digamma1(xv[i])
    return out


def trigamma(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] xv = arr.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = _trigamma1(xv[i])
    return out
