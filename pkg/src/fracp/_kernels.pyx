# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pairwise kernels.

All-pairs sums over grid nodes with translation-invariant weights indexed
by integer offset. These loops dominate runtime for operator application,
energy/gradient evaluation, Gagliardo double sums and Holder pair sups;
everything else in the package stays in NumPy.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()


cdef inline double _jp(double t, double pm1) noexcept nogil:
    # integer exponents (p = 2, 3, 4) stay pure multiplications
    if pm1 == 1.0:
        return t
    if pm1 == 2.0:
        return t * fabs(t)
    if pm1 == 3.0:
        return t * t * t
    if t > 0.0:
        return pow(t, pm1)
    if t < 0.0:
        return -pow(-t, pm1)
    return 0.0


cdef inline double _amp(double t, double e) noexcept nogil:
    if e == 0.0:
        return 1.0
    if e == 1.0:
        return fabs(t)
    if e == 2.0:
        return t * t
    if e == 3.0:
        return fabs(t) * t * t
    if e == 4.0:
        return (t * t) * (t * t)
    return pow(fabs(t), e)


def jp_pair_sum_1d(double[::1] v, double[::1] w, double pm1, double[::1] out):
    """out[i] = sum_{j != i} J_p(v[i]-v[j]) * w[|i-j|], antisymmetric accumulation."""
    cdef Py_ssize_t m = v.shape[0]
    cdef Py_ssize_t i, j
    cdef double t, e
    with nogil:
        for i in range(m):
            for j in range(i + 1, m):
                t = v[i] - v[j]
                e = _jp(t, pm1) * w[j - i]
                out[i] += e
                out[j] -= e


def pow_pair_sum_1d(double[::1] v, double[::1] w, double q) -> float:
    """sum over ordered pairs i != j of |v[i]-v[j]|^q * w[|i-j|]."""
    cdef Py_ssize_t m = v.shape[0]
    cdef Py_ssize_t i, j
    cdef double total = 0.0
    with nogil:
        for i in range(m):
            for j in range(i + 1, m):
                total += _amp(v[i] - v[j], q) * w[j - i]
    return 2.0 * total


def amp_pair_sum_1d(double[::1] v, double[::1] w, double e, double[::1] out):
    """out[i] = sum_{j != i} |v[i]-v[j]|^e * w[|i-j|]."""
    cdef Py_ssize_t m = v.shape[0]
    cdef Py_ssize_t i, j
    cdef double a
    with nogil:
        for i in range(m):
            for j in range(i + 1, m):
                a = _amp(v[i] - v[j], e) * w[j - i]
                out[i] += a
                out[j] += a


def pair_sup_1d(double[::1] v, double[::1] dpow) -> float:
    """max over node pairs of |v[i]-v[j]| * dpow[|i-j|]."""
    cdef Py_ssize_t m = v.shape[0]
    cdef Py_ssize_t k, i
    cdef double best = 0.0, cand, dk
    with nogil:
        for k in range(1, m):
            dk = dpow[k]
            for i in range(m - k):
                cand = fabs(v[i + k] - v[i]) * dk
                if cand > best:
                    best = cand
    return best


def jp_pair_sum_2d(double[:, ::1] v, double[:, ::1] w2, double pm1, double[:, ::1] out):
    cdef Py_ssize_t m0 = v.shape[0], m1 = v.shape[1]
    cdef Py_ssize_t d0, d1, i0, i1, j1, lo1, hi1
    cdef double t, e, wk
    with nogil:
        for d0 in range(m0):
            for d1 in range(-(m1 - 1), m1):
                if d0 == 0 and d1 <= 0:
                    continue
                wk = w2[d0, d1 if d1 >= 0 else -d1]
                lo1 = -d1 if d1 < 0 else 0
                hi1 = m1 - d1 if d1 > 0 else m1
                for i0 in range(m0 - d0):
                    for i1 in range(lo1, hi1):
                        j1 = i1 + d1
                        t = v[i0, i1] - v[i0 + d0, j1]
                        e = _jp(t, pm1) * wk
                        out[i0, i1] += e
                        out[i0 + d0, j1] -= e


def pow_pair_sum_2d(double[:, ::1] v, double[:, ::1] w2, double q) -> float:
    cdef Py_ssize_t m0 = v.shape[0], m1 = v.shape[1]
    cdef Py_ssize_t d0, d1, i0, i1, lo1, hi1
    cdef double total = 0.0, wk
    with nogil:
        for d0 in range(m0):
            for d1 in range(-(m1 - 1), m1):
                if d0 == 0 and d1 <= 0:
                    continue
                wk = w2[d0, d1 if d1 >= 0 else -d1]
                lo1 = -d1 if d1 < 0 else 0
                hi1 = m1 - d1 if d1 > 0 else m1
                for i0 in range(m0 - d0):
                    for i1 in range(lo1, hi1):
                        total += _amp(v[i0, i1] - v[i0 + d0, i1 + d1], q) * wk
    return 2.0 * total


def amp_pair_sum_2d(double[:, ::1] v, double[:, ::1] w2, double e, double[:, ::1] out):
    cdef Py_ssize_t m0 = v.shape[0], m1 = v.shape[1]
    cdef Py_ssize_t d0, d1, i0, i1, j1, lo1, hi1
    cdef double a, wk
    with nogil:
        for d0 in range(m0):
            for d1 in range(-(m1 - 1), m1):
                if d0 == 0 and d1 <= 0:
                    continue
                wk = w2[d0, d1 if d1 >= 0 else -d1]
                lo1 = -d1 if d1 < 0 else 0
                hi1 = m1 - d1 if d1 > 0 else m1
                for i0 in range(m0 - d0):
                    for i1 in range(lo1, hi1):
                        j1 = i1 + d1
                        a = _amp(v[i0, i1] - v[i0 + d0, j1], e) * wk
                        out[i0, i1] += a
                        out[i0 + d0, j1] += a


def pair_sup_2d(double[:, ::1] v, double[:, ::1] dpow2) -> float:
    cdef Py_ssize_t m0 = v.shape[0], m1 = v.shape[1]
    cdef Py_ssize_t d0, d1, i0, i1, lo1, hi1
    cdef double best = 0.0, cand, dk
    with nogil:
        for d0 in range(m0):
            for d1 in range(-(m1 - 1), m1):
                if d0 == 0 and d1 <= 0:
                    continue
                dk = dpow2[d0, d1 if d1 >= 0 else -d1]
                lo1 = -d1 if d1 < 0 else 0
                hi1 = m1 - d1 if d1 > 0 else m1
                for i0 in range(m0 - d0):
                    for i1 in range(lo1, hi1):
                        cand = fabs(v[i0, i1] - v[i0 + d0, i1 + d1]) * dk
                        if cand > best:
                            best = cand
    return best
