#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py            # full sweep
    python benchmarks/bench_kernels.py --quick    # small sizes, fewer repeats

The same comparison can be driven end to end by running the test suite (or
any CLI command) with ABE_NUMBA=0.
"""

import argparse
import statistics
import time

import numpy as np

from abe import _kernels


def time_call(fn, *args, repeats=7):
    best = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best.append(time.perf_counter() - start)
    return statistics.median(best)


def bench_moments(sizes, repeats):
    rng = np.random.default_rng(0)
    print(f"{'batch_moments':<24}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for n, d in sizes:
        z = rng.normal(0, 1, (n, d))
        _kernels.batch_moments_numba(z)  # compile before timing
        t_numba = time_call(_kernels.batch_moments_numba, z, repeats=repeats)
        t_numpy = time_call(_kernels.batch_moments_numpy, z, repeats=repeats)
        np.testing.assert_allclose(
            _kernels.batch_moments_numba(z),
            _kernels.batch_moments_numpy(z),
            rtol=1e-10,
        )
        print(
            f"  N={n:<6} D={d:<10}{t_numba * 1e6:>10.1f}us{t_numpy * 1e6:>10.1f}us"
            f"{t_numpy / t_numba:>9.1f}x"
        )


def bench_suffix_pearson(lengths, repeats):
    rng = np.random.default_rng(1)
    print(f"{'suffix_pearson':<24}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for t in lengths:
        y = np.cumsum(rng.normal(0, 1, t))
        x = np.cumsum(rng.normal(0, 1, t))
        _kernels.suffix_pearson_numba(y, x)
        t_numba = time_call(_kernels.suffix_pearson_numba, y, x, repeats=repeats)
        t_numpy = time_call(_kernels.suffix_pearson_numpy, y, x, repeats=repeats)
        a = _kernels.suffix_pearson_numba(y, x)
        b = _kernels.suffix_pearson_numpy(y, x)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)
        print(
            f"  T={t:<12}{t_numba * 1e6:>10.1f}us{t_numpy * 1e6:>10.1f}us"
            f"{t_numpy / t_numba:>9.1f}x"
        )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="small sizes only")
    args = parser.parse_args()

    if not _kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare")

    if args.quick:
        moment_sizes = [(8, 64), (64, 1024)]
        lengths = [64, 256]
        repeats = 5
    else:
        moment_sizes = [(5, 64), (32, 512), (64, 4096), (256, 16384)]
        lengths = [32, 128, 512, 2048]
        repeats = 9

    print(f"numba path active by default: {_kernels.USING_NUMBA}")
    bench_moments(moment_sizes, repeats)
    print()
    bench_suffix_pearson(lengths, repeats)


if __name__ == "__main__":
    main()
