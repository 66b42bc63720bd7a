"""Time the sweep correlator against the O(N^2) enumeration.

Uniform (Poisson-like) streams at a fixed rate; the brute-force column stops
once its quadratic extrapolation to the next size exceeds --brute-limit seconds.

    python3 scripts/benchmark_correlator.py [--max-events 1e7] [--rate 15300]
"""

import argparse
import time

import numpy as np

from emitterlab.correlator import DEFAULT_BIN_WIDTH, brute_force_pairs, coincidence_histogram


def _best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-events", type=float, default=1e7, help="events per channel")
    ap.add_argument("--rate", type=float, default=15300.0, help="cts/s per channel")
    ap.add_argument("--window", type=float, default=20e-9, help="half range, s")
    ap.add_argument("--brute-limit", type=float, default=10.0, help="seconds")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    # warm the JIT caches outside the timed region
    coincidence_histogram(np.arange(10), np.arange(10), DEFAULT_BIN_WIDTH, args.window)
    brute_force_pairs(np.arange(10), np.arange(10), DEFAULT_BIN_WIDTH, args.window)

    print(f"{'events':>10} {'sweep_s':>10} {'Mev/s':>8} {'brute_s':>10} {'equal':>6}")
    brute_ok = True
    n = 1000
    while n <= args.max_events:
        span = int(n / args.rate * 1e12)
        a = np.sort(rng.integers(0, span, n))
        b = np.sort(rng.integers(0, span, n))
        t_fast, h = _best_of(
            lambda: coincidence_histogram(a, b, DEFAULT_BIN_WIDTH, args.window), args.repeats)
        row = f"{n:>10d} {t_fast:>10.4f} {2 * n / t_fast / 1e6:>8.1f}"
        if brute_ok:
            t_slow, ref = _best_of(
                lambda: brute_force_pairs(a, b, DEFAULT_BIN_WIDTH, args.window), 1)
            row += f" {t_slow:>10.4f} {str(np.array_equal(h.counts, ref.counts)):>6}"
            brute_ok = 100 * t_slow < args.brute_limit
        else:
            row += f" {'-':>10} {'-':>6}"
        print(row, flush=True)
        n *= 10


if __name__ == "__main__":
    main()
