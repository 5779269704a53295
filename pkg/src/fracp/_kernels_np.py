"""NumPy fallback for the compiled pairwise kernels.

Same call signatures and semantics as the Cython module; loops run over
integer offsets with vectorized shifted-array arithmetic, so the cost is
one array operation per distinct offset.
"""

from __future__ import annotations

import numpy as np


def _spow(t, e):
    if e == 1.0:
        return t
    return np.sign(t) * np.abs(t) ** e


def _amp(t, e):
    if e == 0.0:
        return np.ones_like(t)
    return np.abs(t) ** e


def jp_pair_sum_1d(v, w, pm1, out):
    m = v.shape[0]
    for k in range(1, m):
        t = v[:-k] - v[k:]
        e = _spow(t, pm1) * w[k]
        out[:-k] += e
        out[k:] -= e


def pow_pair_sum_1d(v, w, q):
    m = v.shape[0]
    total = 0.0
    for k in range(1, m):
        t = v[:-k] - v[k:]
        total += float(np.sum(_amp(t, q))) * w[k]
    return 2.0 * total


def amp_pair_sum_1d(v, w, e, out):
    m = v.shape[0]
    for k in range(1, m):
        a = _amp(v[:-k] - v[k:], e) * w[k]
        out[:-k] += a
        out[k:] += a


def pair_sup_1d(v, dpow):
    m = v.shape[0]
    best = 0.0
    for k in range(1, m):
        cand = float(np.max(np.abs(v[k:] - v[:-k]))) * dpow[k]
        if cand > best:
            best = cand
    return best


def _offsets_2d(m0, m1):
    for d0 in range(m0):
        for d1 in range(-(m1 - 1), m1):
            if d0 == 0 and d1 <= 0:
                continue
            yield d0, d1


def _pair_views(v, d0, d1):
    m0, m1 = v.shape
    lo1 = -d1 if d1 < 0 else 0
    hi1 = m1 - d1 if d1 > 0 else m1
    a = v[: m0 - d0, lo1:hi1]
    b = v[d0:, lo1 + d1 : hi1 + d1]
    return a, b, (slice(0, m0 - d0), slice(lo1, hi1)), (slice(d0, m0), slice(lo1 + d1, hi1 + d1))


def jp_pair_sum_2d(v, w2, pm1, out):
    for d0, d1 in _offsets_2d(*v.shape):
        a, b, sa, sb = _pair_views(v, d0, d1)
        e = _spow(a - b, pm1) * w2[d0, abs(d1)]
        out[sa] += e
        out[sb] -= e


def pow_pair_sum_2d(v, w2, q):
    total = 0.0
    for d0, d1 in _offsets_2d(*v.shape):
        a, b, _, _ = _pair_views(v, d0, d1)
        total += float(np.sum(_amp(a - b, q))) * w2[d0, abs(d1)]
    return 2.0 * total


def amp_pair_sum_2d(v, w2, e, out):
    for d0, d1 in _offsets_2d(*v.shape):
        a, b, sa, sb = _pair_views(v, d0, d1)
        t = _amp(a - b, e) * w2[d0, abs(d1)]
        out[sa] += t
        out[sb] += t


def pair_sup_2d(v, dpow2):
    best = 0.0
    for d0, d1 in _offsets_2d(*v.shape):
        a, b, _, _ = _pair_views(v, d0, d1)
        cand = float(np.max(np.abs(a - b))) * dpow2[d0, abs(d1)]
        if cand > best:
            best = cand
    return best
