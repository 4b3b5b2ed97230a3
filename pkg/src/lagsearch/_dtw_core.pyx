# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled DTW recurrences.

All three entry points evaluate the same cell update

    D[i, j] = cost(a[i], b[j]) + min(D[i-1, j-1], D[i-1, j], D[i, j-1])

in the same floating-point order as ``_dtw_py``, so both backends agree
bit for bit. ``cost_kind`` is 0 for squared difference, 1 for absolute
difference; ``band`` < 0 disables the Sakoe-Chiba constraint.
"""

import numpy as np
from libc.math cimport fabs, INFINITY


cdef inline double _cost(double x, double y, int kind) noexcept nogil:
    cdef double d = x - y
    if kind == 0:
        return d * d
    return fabs(d)


cdef void _fill_row(const double[::1] a, const double[::1] b, Py_ssize_t i,
                    double[::1] prev, double[::1] cur, int kind,
                    Py_ssize_t band) noexcept nogil:
    # Boundary cells and the band are peeled out of the inner loop; the
    # values written are identical to the branchy reference in _dtw_py.
    cdef Py_ssize_t j, m = b.shape[0]
    cdef Py_ssize_t lo = 0, hi = m - 1
    cdef double best, left
    cdef double ai = a[i]
    if band >= 0:
        if i - band > lo:
            lo = i - band
        if i + band < hi:
            hi = i + band
        for j in range(0, lo if lo < m else m):
            cur[j] = INFINITY
        for j in range(hi + 1 if hi + 1 > 0 else 0, m):
            cur[j] = INFINITY
        if lo > hi:
            return
    if i == 0:
        left = _cost(ai, b[0], kind)
        cur[0] = left
        for j in range(1, hi + 1):
            left = _cost(ai, b[j], kind) + left
            cur[j] = left
        return
    if lo == 0:
        left = _cost(ai, b[0], kind) + prev[0]
    else:
        best = prev[lo - 1]
        if prev[lo] < best:
            best = prev[lo]
        left = _cost(ai, b[lo], kind) + best
    cur[lo] = left
    for j in range(lo + 1, hi + 1):
        best = prev[j - 1]
        if prev[j] < best:
            best = prev[j]
        if left < best:
            best = left
        left = _cost(ai, b[j], kind) + best
        cur[j] = left


def last_row(const double[::1] a, const double[::1] b, int cost_kind=0,
             Py_ssize_t band=-1):
    """Final DP row: ``out[j]`` is the DTW distance between ``a`` and ``b[:j+1]``."""
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i
    buf_a = np.empty(m, dtype=np.float64)
    buf_b = np.empty(m, dtype=np.float64)
    cdef double[::1] prev = buf_a
    cdef double[::1] cur = buf_b
    cdef double[::1] tmp
    with nogil:
        for i in range(n):
            _fill_row(a, b, i, prev, cur, cost_kind, band)
            tmp = prev
            prev = cur
            cur = tmp
    # row i lands in buf_b when i is even
    return buf_b if n % 2 == 1 else buf_a


def distance(const double[::1] a, const double[::1] b, int cost_kind=0,
             Py_ssize_t band=-1):
    """DTW distance using two rows sized by the shorter sequence."""
    if b.shape[0] > a.shape[0]:
        a, b = b, a
    return float(last_row(a, b, cost_kind, band)[b.shape[0] - 1])


def cost_matrix(const double[::1] a, const double[::1] b, int cost_kind=0,
                Py_ssize_t band=-1):
    """Full accumulated-cost matrix of shape (len(a), len(b))."""
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] D = out
    scratch = np.empty(m, dtype=np.float64)
    cdef double[::1] dummy = scratch
    with nogil:
        for i in range(n):
            if i == 0:
                _fill_row(a, b, i, dummy, D[0], cost_kind, band)
            else:
                _fill_row(a, b, i, D[i - 1], D[i], cost_kind, band)
    return out
