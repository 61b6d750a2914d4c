"""Benchmark the LCS scoring kernel: numba JIT vs the pure-numpy fallback.

The LCS dynamic program dominates batch ROUGE-L scoring, so this is the
one loop worth JIT-compiling. Run inside an environment with the package
installed:

    python benchmarks/bench_lcs.py
    QASUM_NUMBA=0 python benchmarks/bench_lcs.py   # numpy only

Typical candidate/reference summaries are tens to hundreds of tokens; the
default lengths bracket that range.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qasum._kernels import NUMBA_ENABLED, lcs_length_numba, lcs_length_numpy


def make_pairs(rng, length, count, vocab=2000):
    return [
        (
            rng.integers(0, vocab, size=length).astype(np.int64),
            rng.integers(0, vocab, size=length).astype(np.int64),
        )
        for _ in range(count)
    ]


def bench(fn, pairs, repeats):
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        for a, b in pairs:
            fn(a, b)
        best = min(best, time.perf_counter() - started)
    return best / len(pairs)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--lengths", type=int, nargs="+", default=[32, 128, 512])
    parser.add_argument("--pairs", type=int, default=50, help="pairs per length")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)

    if NUMBA_ENABLED:
        warm = make_pairs(rng, 8, 1)[0]
        started = time.perf_counter()
        lcs_length_numba(*warm)
        print(f"numba first-call (compile) overhead: {time.perf_counter() - started:.3f}s")
    else:
        print("numba path disabled (QASUM_NUMBA=0 or numba unavailable); numpy only")

    header = f"{'tokens':>8} {'numpy ms/pair':>15}"
    if NUMBA_ENABLED:
        header += f" {'numba ms/pair':>15} {'speedup':>9}"
    print(header)

    for length in args.lengths:
        pairs = make_pairs(rng, length, args.pairs)
        t_numpy = bench(lcs_length_numpy, pairs, args.repeats)
        line = f"{length:>8} {t_numpy * 1e3:>15.3f}"
        if NUMBA_ENABLED:
            t_numba = bench(lcs_length_numba, pairs, args.repeats)
            line += f" {t_numba * 1e3:>15.3f} {t_numpy / t_numba:>8.1f}x"
        # sanity: both paths must agree
        for a, b in pairs[:3]:
            expect = lcs_length_numpy(a, b)
            if NUMBA_ENABLED:
                assert lcs_length_numba(a, b) == expect
        print(line)


if __name__ == "__main__":
    main()
