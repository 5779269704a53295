"""Backend dispatch for the pairwise kernels.

The compiled extension is preferred when importable; otherwise the NumPy
fallback is used. FRACP_BACKEND=numpy|cython forces a choice (cython
raises if the extension is missing).
"""

from __future__ import annotations

import os

import numpy as np

_requested = os.environ.get("FRACP_BACKEND", "").strip().lower()

if _requested == "numpy":
    from . import _kernels_np as _impl

    BACKEND = "numpy"
elif _requested == "cython":
    from . import _kernels as _impl  # type: ignore[attr-defined]

    BACKEND = "cython"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_np as _impl

        BACKEND = "numpy"


def _c1(a):
    return np.ascontiguousarray(a, dtype=float)


def jp_pair_sum(values: np.ndarray, weights: np.ndarray, pm1: float) -> np.ndarray:
    """Per-node sum of J_p(differences) against offset weights.

    1D: weights[k] applies to |i-j| = k. 2D: weights[|di|, |dj|].
    """
    v = _c1(values)
    out = np.zeros_like(v)
    if v.ndim == 1:
        _impl.jp_pair_sum_1d(v, _c1(weights), float(pm1), out)
    else:
        _impl.jp_pair_sum_2d(v, _c1(weights), float(pm1), out)
    return out


def pow_pair_sum(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """Sum over ordered node pairs of |v_i - v_j|^q * weight(offset)."""
    v = _c1(values)
    if v.ndim == 1:
        return float(_impl.pow_pair_sum_1d(v, _c1(weights), float(q)))
    return float(_impl.pow_pair_sum_2d(v, _c1(weights), float(q)))


def amp_pair_sum(values: np.ndarray, weights: np.ndarray, e: float) -> np.ndarray:
    """Per-node sum of |v_i - v_j|^e * weight(offset) (Hessian-diagonal helper)."""
    v = _c1(values)
    out = np.zeros_like(v)
    if v.ndim == 1:
        _impl.amp_pair_sum_1d(v, _c1(weights), float(e), out)
    else:
        _impl.amp_pair_sum_2d(v, _c1(weights), float(e), out)
    return out


def pair_sup(values: np.ndarray, dist_pow: np.ndarray) -> float:
    """Exact discrete sup over node pairs of |v_i - v_j| * dist_pow(offset)."""
    v = _c1(values)
    if v.ndim == 1:
        return float(_impl.pair_sup_1d(v, _c1(dist_pow)))
    return float(_impl.pair_sup_2d(v, _c1(dist_pow)))
