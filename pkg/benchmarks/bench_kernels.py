"""Compare the numba and pure-numpy paths of the enumeration kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The numpy path is what runs under TWOWEIGHT_DISABLE_NUMBA=1.
"""

import argparse
import time

import numpy as np

from twoweight import _kernels


def timeit(fn, repeat):
    fn()  # warm up (and compile)
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        print("numba not installed; only the numpy path is available")
        return
    rng = np.random.default_rng(0)
    x = rng.standard_normal(20)
    G = rng.standard_normal((12, 64))
    a = rng.random(12)
    w = rng.random(64)
    M = rng.standard_normal((5, 5))
    cases = [
        ("rademacher_moments N=20", lambda nb: _kernels.rademacher_moments(x, use_numba=nb)),
        ("sign_sum_norms N=12 L=64", lambda nb: _kernels.sign_sum_norms(G, a, w, 3.0, use_numba=nb)),
        ("bruteforce_max 5 leaves grid=40", lambda nb: _kernels.bruteforce_max(M, 3.0, 1.5, 40, use_numba=nb)),
    ]
    print(f"{'kernel':34s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}  max|diff|")
    for name, fn in cases:
        t_nb = timeit(lambda: fn(True), args.repeat)
        t_np = timeit(lambda: fn(False), args.repeat)
        r_nb, r_np = fn(True), fn(False)
        diff = max(float(np.max(np.abs(np.asarray(u) - np.asarray(v)))) for u, v in zip(r_nb, r_np))
        print(f"{name:34s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f}  {diff:.1e}")


if __name__ == "__main__":
    main()
