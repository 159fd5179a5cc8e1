# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled summation core: windowed kernel sums for sorted 1-d samples.

Same contract as ``_purecore.window_sums``; a tight C loop with an inline
binary search per query, with fast branches for the linear and parabolic
profiles.
"""

from libc.math cimport fabs, pow

import numpy as np


def window_sums(double[::1] x_sorted, double scale, double power, double[::1] ts, double h):
    """Windowed sums of K((t - x)/h) and K²((t - x)/h), per query point."""
    cdef Py_ssize_t n = x_sorted.shape[0]
    cdef Py_ssize_t m = ts.shape[0]
    s1_arr = np.zeros(m)
    s2_arr = np.zeros(m)
    cdef double[::1] s1 = s1_arr
    cdef double[::1] s2 = s2_arr
    cdef Py_ssize_t k, i, lo, hi, mid
    cdef double t, left, u, val, acc1, acc2
    cdef bint linear = power == 1.0
    cdef bint parabolic = power == 2.0
    for k in range(m):
        t = ts[k]
        left = t - h
        lo = 0
        hi = n
        while lo < hi:
            mid = (lo + hi) >> 1
            if x_sorted[mid] < left:
                lo = mid + 1
            else:
                hi = mid
        acc1 = 0.0
        acc2 = 0.0
        i = lo
        while i < n and x_sorted[i] <= t + h:
            u = fabs(t - x_sorted[i]) / h
            if linear:
                val = 1.0 - u
            elif parabolic:
                val = 1.0 - u * u
            else:
                val = 1.0 - pow(u, power)
            if val > 0.0:
                val *= scale
                acc1 += val
                acc2 += val * val
            i += 1
        s1[k] = acc1
        s2[k] = acc2
    return s1_arr, s2_arr
