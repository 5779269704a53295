"""Benchmark the compiled pairwise kernels against the NumPy fallback.

Times the hot operations (per-node signed-power pair sums, scalar energy
pair sums, pairwise sup quotients) on solver-scale arrays and prints one
table with the speedups. Both implementations are imported directly so
the comparison does not depend on which backend the package selected at
import time.

Run: python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from fracp import _kernels_np
from fracp.grid import Grid
from fracp.params import Params
from fracp.quadrature import build_kernel_table

try:
    from fracp import _kernels
except ImportError:
    _kernels = None


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases():
    p = Params(N=1, s=0.6, p=3.0, q=2.0)
    g1 = Grid((-1.0,), (1.0,), 4096)
    w1 = build_kernel_table(g1, p).weights
    v1 = np.sin(3.0 * g1.points[:, 0])
    d1 = np.zeros(4096)
    d1[1:] = (np.arange(1, 4096) * g1.spacing) ** -0.5

    p2 = Params(N=2, s=0.5, p=2.5, q=2.0)
    g2 = Grid((-1.0, -1.0), (1.0, 1.0), 64)
    w2 = build_kernel_table(g2, p2).weights
    v2 = np.sin(g2.points[:, 0] + 2.0 * g2.points[:, 1]).reshape(g2.shape)

    yield ("jp_pair_sum 1d M=4096", lambda impl: impl.jp_pair_sum_1d(
        v1, w1, 2.0, np.zeros_like(v1)))
    yield ("pow_pair_sum 1d M=4096", lambda impl: impl.pow_pair_sum_1d(v1, w1, 3.0))
    yield ("amp_pair_sum 1d M=4096", lambda impl: impl.amp_pair_sum_1d(
        v1, w1, 1.0, np.zeros_like(v1)))
    yield ("jp_pair_sum 2d 64x64", lambda impl: impl.jp_pair_sum_2d(
        v2, w2, 1.5, np.zeros_like(v2)))
    yield ("pow_pair_sum 2d 64x64", lambda impl: impl.pow_pair_sum_2d(v2, w2, 2.5))
    yield ("pair_sup M=4096", lambda impl: impl.pair_sup_1d(v1, d1))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5, help="timing repeats, best is kept")
    args = ap.parse_args()

    if _kernels is None:
        print("compiled extension not importable; timing the NumPy fallback only")
    header = f"{'operation':<28}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, call in _cases():
        t_np = _time(lambda: call(_kernels_np), args.repeat)
        if _kernels is None:
            print(f"{name:<28}{1e3 * t_np:>12.2f}{'-':>13}{'-':>9}")
            continue
        t_cy = _time(lambda: call(_kernels), args.repeat)
        print(f"{name:<28}{1e3 * t_np:>12.2f}{1e3 * t_cy:>13.2f}{t_np / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
