"""Compare the compiled DTW kernel with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--lengths 50,100,200] [--reps 3]

Both kernels are checked for identical results before timing.
"""

import argparse
import time

import numpy as np

from lagsearch import _dtw_py
from lagsearch._backend import BACKEND, kernels


def best_time(fn, reps):
    best = float("inf")
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lengths", default="50,100,200")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if BACKEND != "compiled":
        print("compiled extension not available; only the fallback can be timed")
    rng = np.random.default_rng(args.seed)
    print(f"{'T':>6}{'compiled ms':>14}{'python ms':>12}{'ratio':>9}{'ns/cell':>10}")
    for t in (int(x) for x in args.lengths.split(",")):
        a, b = np.cumsum(rng.standard_normal((2, t)), axis=1)
        assert np.array_equal(kernels.last_row(a, b, 0, -1), _dtw_py.last_row(a, b, 0, -1))
        fast = best_time(lambda: kernels.last_row(a, b, 0, -1), max(args.reps, 20))
        slow = best_time(lambda: _dtw_py.last_row(a, b, 0, -1), args.reps)
        print(f"{t:>6}{fast * 1e3:>14.4f}{slow * 1e3:>12.3f}{slow / fast:>9.0f}"
              f"{fast / (t * t) * 1e9:>10.2f}")


if __name__ == "__main__":
    main()
