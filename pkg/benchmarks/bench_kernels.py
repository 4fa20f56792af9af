#!/usr/bin/env python3
"""Throughput comparison of the numba kernels against the numpy fallback.

Run:  python benchmarks/bench_kernels.py [--paths N]

The numba path is what MFTSIM uses by default; set MFTSIM_DISABLE_NUMBA=1
to force the numpy fallback package-wide.  Both backends are checked for
agreement before timing.
"""

import argparse
import time

import numpy as np

from mftsim import kernels as K


def _time(fn, *args, repeat=5):
    fn(*args)  # warm-up / JIT
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--paths", type=int, default=100_000)
    parser.add_argument("--steps", type=int, default=64)
    parser.add_argument("--assets", type=int, default=2)
    args = parser.parse_args()

    if not K.NUMBA_AVAILABLE:
        print("numba backend unavailable (not installed or MFTSIM_DISABLE_NUMBA set);")
        print("timing the numpy fallback only.")

    B, M, n = args.paths, args.steps, args.assets
    rng = np.random.default_rng(0)
    pi = rng.normal(size=(B, M, n)) * 0.4
    a_tilde = rng.normal(size=(B, M, n)) * 0.05
    sigma = rng.normal(size=(B, M, n, n)) * 0.05 + 0.25 * np.eye(n)
    dw = rng.normal(size=(B, M, n)) * np.sqrt(1.0 / M)
    dt = 1.0 / M

    cum = np.cumsum(np.array([[0.9, 0.1], [0.15, 0.85]]), axis=1)
    u = rng.random(size=(B, M))
    init = rng.integers(0, 2, size=B)

    vals = rng.normal(size=(B, M + 1, n * n))

    cases = [
        ("wealth_path", (pi, a_tilde, sigma, dw, dt),
         K.wealth_path_numpy, getattr(K, "wealth_path_numba", None)),
        ("wealth_step", (pi[:, 0], a_tilde[:, 0], sigma[:, 0], dw[:, 0], dt),
         K.wealth_step_numpy, getattr(K, "wealth_step_numba", None)),
        ("regime_chain", (init, u, cum),
         K.regime_chain_numpy, getattr(K, "regime_chain_numba", None)),
        ("lagged_window_mean", (vals, M // 4),
         K.lagged_window_mean_numpy, getattr(K, "lagged_window_mean_numba", None)),
    ]

    print(f"paths={B} steps={M} assets={n}  (best of 5)")
    print(f"{'kernel':<20} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, call_args, np_fn, nb_fn in cases:
        t_np = _time(np_fn, *call_args)
        if nb_fn is None:
            print(f"{name:<20} {t_np*1e3:>8.1f}ms {'-':>10} {'-':>8}")
            continue
        ref = np_fn(*call_args)
        out = nb_fn(*call_args)
        assert np.array_equal(ref, out), f"{name}: backend results differ"
        t_nb = _time(nb_fn, *call_args)
        print(f"{name:<20} {t_np*1e3:>8.1f}ms {t_nb*1e3:>8.1f}ms {t_np/t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
