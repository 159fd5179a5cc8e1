"""Benchmark the compiled summation core against the numpy fallback.

Runs ``window_sums`` (the single hot loop behind every kernel estimate)
on both backends over a grid of sample sizes and query counts, checks
that the outputs agree to machine precision, and prints per-cell timings
and speedups.

    python3 benchmarks/bench_backends.py [--sizes 4096,65536] [--queries 64,2048]
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from lodens import _purecore


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="4096,16384,65536",
                        help="comma-separated sample sizes")
    parser.add_argument("--queries", default="64,512,2048",
                        help="comma-separated query-grid sizes")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats per cell (best-of)")
    parser.add_argument("--seed", type=int, default=20260814)
    return parser.parse_args(argv)


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        from lodens import _fastcore
    except ImportError:
        print("[skip] compiled core not available; nothing to compare")
        return 0

    rng = np.random.default_rng(args.seed)
    sizes = [int(v) for v in args.sizes.split(",")]
    queries = [int(v) for v in args.queries.split(",")]
    print(f"[bench] window_sums, best of {args.repeats}, seed {args.seed}")
    print(f"{'n':>8} {'queries':>8} {'compiled':>12} {'pure':>12} {'speedup':>8}")

    for n in sizes:
        x = np.sort(rng.uniform(-1.0, 1.0, n))
        for m in queries:
            ts = np.linspace(-1.2, 1.2, m)
            h = 4.0 * n ** (-1.0 / 3.0)
            fast = _fastcore.window_sums(x, 1.0, 1.0, ts, h)
            pure = _purecore.window_sums(x, 1.0, 1.0, ts, h)
            for got, want in zip(fast, pure):
                np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)
            t_fast = best_of(lambda: _fastcore.window_sums(x, 1.0, 1.0, ts, h), args.repeats)
            t_pure = best_of(lambda: _purecore.window_sums(x, 1.0, 1.0, ts, h), args.repeats)
            print(f"{n:>8} {m:>8} {t_fast * 1e3:>10.2f}ms {t_pure * 1e3:>10.2f}ms "
                  f"{t_pure / t_fast:>7.1f}x")

    print("[done] ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
