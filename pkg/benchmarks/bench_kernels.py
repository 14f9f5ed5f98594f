#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times ``best_split``, ``weighted_risk`` and ``risk_at_alpha`` on random
datasets of a few sizes, checks both implementations agree, and prints a
speedup table.  Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from budgetboost import _kernels_py
from budgetboost import kernels

try:
    from budgetboost import _speedups
except ImportError:
    _speedups = None


def make_split_case(rng, n, n_cols, k):
    X = np.ascontiguousarray(rng.standard_normal((n, n_cols)))
    Y = np.ascontiguousarray(rng.standard_normal((n, k)))
    w = np.ascontiguousarray(rng.uniform(0.5, 2.0, size=n))
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    pen = np.abs(rng.standard_normal(n_cols)) * 0.1
    return (order, X, w, Y, pen)


def make_risk_case(rng, n, k):
    scores = np.ascontiguousarray(rng.standard_normal((n, k)))
    psums = np.ascontiguousarray(rng.uniform(0.1, 5.0, size=(n, k)))
    updates = np.ascontiguousarray(rng.standard_normal((n, k)))
    return scores, psums, updates


def timeit(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    opts = ap.parse_args()

    if _speedups is None:
        print("compiled extension not built; nothing to compare")
        return
    print(f"active implementation at import: "
          f"{'compiled' if kernels.USING_EXTENSION else 'pure python'}")

    rng = np.random.default_rng(0)
    cases = []
    for n, n_cols, k in [(200, 29, 5), (2000, 29, 5), (20000, 59, 8)]:
        args = make_split_case(rng, n, n_cols, k)
        cases.append((f"best_split n={n} cols={n_cols} K={k}",
                      _speedups.best_split, _kernels_py.best_split, args))
    for n, k in [(1000, 5), (50000, 8)]:
        s, p, u = make_risk_case(rng, n, k)
        cases.append((f"weighted_risk n={n} K={k}",
                      _speedups.weighted_risk, _kernels_py.weighted_risk, (s, p)))
        cases.append((f"risk_at_alpha n={n} K={k}",
                      _speedups.risk_at_alpha, _kernels_py.risk_at_alpha,
                      (s, p, u, 0.37)))

    print(f"{'case':<38} {'compiled':>10} {'pure':>10} {'speedup':>8}")
    for name, fast, slow, args in cases:
        ra, rb = fast(*args), slow(*args)
        np.testing.assert_allclose(np.asarray(ra, dtype=object).astype(float),
                                   np.asarray(rb, dtype=object).astype(float),
                                   rtol=1e-9)
        ta = timeit(fast, args, opts.repeats)
        tb = timeit(slow, args, opts.repeats)
        print(f"{name:<38} {ta * 1e3:9.3f}ms {tb * 1e3:9.3f}ms {tb / ta:7.1f}x")


if __name__ == "__main__":
    main()
