"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run:
    python benchmarks/bench_kernels.py [n_persons] [n_ages]

Times the three hot kernels (pair counting, triple counting, trajectory
simulation) on an identical workload through both backends and checks the
outputs are bit-identical.  Set HEALTHMARKOV_NO_NUMBA=1 to confirm the
package runs on the fallback path alone.
"""

import sys
import time

import numpy as np

from healthmarkov import kernels


def timeit(func, *args, repeat=5):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = func(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
    n_ages = int(sys.argv[2]) if len(sys.argv) > 2 else 41

    rng = np.random.default_rng(0)
    states = rng.integers(0, 5, size=(n, n_ages)).astype(np.int8)
    states[rng.random((n, n_ages)) < 0.1] = -1

    n_steps = n_ages - 2
    probs = rng.dirichlet([1.0] * 5, size=(n_steps, 25))
    cdf = np.cumsum(probs, axis=2)
    first = rng.integers(0, 5, size=n).astype(np.int8)
    second = rng.integers(0, 5, size=n).astype(np.int8)
    u = rng.random((n, n_steps))

    if not kernels.HAVE_NUMBA:
        print("numba not installed; only the numpy path is available")

    cases = [
        ("pair_counts", kernels._pair_counts_numpy, "_pair_counts_numba", (states,)),
        ("triple_counts", kernels._triple_counts_numpy, "_triple_counts_numba", (states,)),
        ("simulate_paths", kernels._simulate_paths_numpy, "_simulate_paths_numba",
         (first, second, cdf, u)),
    ]

    print(f"workload: {n} persons x {n_ages} ages (backend selected: {kernels.backend()})")
    print(f"{'kernel':<16} {'numpy':>10} {'numba':>10} {'speedup':>9}  identical")
    for name, numpy_impl, numba_name, args in cases:
        t_np, ref = timeit(numpy_impl, *args)
        if kernels.HAVE_NUMBA:
            numba_impl = getattr(kernels, numba_name)
            numba_impl(*args)  # compile outside the timed region
            t_nb, got = timeit(numba_impl, *args)
            same = bool(np.array_equal(ref, got))
            print(f"{name:<16} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms {t_np / t_nb:>8.1f}x  {same}")
        else:
            print(f"{name:<16} {t_np * 1e3:>8.1f}ms {'-':>10} {'-':>9}  -")


if __name__ == "__main__":
    main()
