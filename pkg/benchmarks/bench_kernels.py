"""Compare the compiled kernel with the numpy fallback on the hot paths.

Run with ``python benchmarks/bench_kernels.py``. For every workload it checks
that both backends return bit-identical arrays, then reports the best of
``--repeat`` timings and the speedup of the compiled module.
"""

import argparse
import sys
import timeit

import numpy as np

from coreopt import _kernels_py

try:
    from coreopt import _kernels as _compiled
except ImportError:
    _compiled = None


def workloads(d, m, rounds):
    rng = np.random.default_rng(0)
    r = np.repeat(np.arange(rounds, dtype=np.uint64), m)
    j = np.tile(np.arange(1, m + 1, dtype=np.uint64), rounds)
    grads = rng.standard_normal((50, d))
    basis = rng.standard_normal((m, d))
    coeffs = rng.standard_normal((50, m))
    return {
        f"gaussian_rows {rounds}x{m}x{d}": lambda k: k.gaussian_rows(7, r, j, d),
        f"dot_rows 50x{m}x{d}": lambda k: k.dot_rows(grads, basis),
        f"combine_rows 50x{m}x{d}": lambda k: k.combine_rows(coeffs, basis),
        "normal_ppf 1e5": lambda k: k.normal_ppf(np.linspace(1e-9, 1 - 1e-9, 100_000)),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--dim", type=int, default=2000)
    parser.add_argument("--m", type=int, default=8)
    parser.add_argument("--rounds", type=int, default=64)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _compiled is None:
        print("compiled kernel not built; only the numpy fallback is available")
        return 1
    print(f"{'workload':<32} {'python ms':>10} {'cython ms':>10} {'speedup':>8}  identical")
    for name, fn in workloads(args.dim, args.m, args.rounds).items():
        same = np.array_equal(fn(_kernels_py), fn(_compiled))
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(lambda: fn(_compiled), number=1, repeat=args.repeat))
        print(f"{name:<32} {1e3 * t_py:>10.2f} {1e3 * t_c:>10.2f} {t_py / t_c:>7.1f}x  {same}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
