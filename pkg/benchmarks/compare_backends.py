"""Timing comparison of the compiled and pure-numpy kernel backends.

Runs the hot kernels on both implementations in one process (bypassing the
OBLIVINFER_BACKEND dispatch) and prints a table of per-call times.  Usage:

    python3 benchmarks/compare_backends.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from oblivinfer.backends import numpy_impl

try:
    from oblivinfer.backends import numba_impl
except ImportError:
    numba_impl = None


def best_of(fn, repeats, number):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def cases(rng):
    a = rng.standard_normal((128, 784)).astype(np.float32)
    b = rng.standard_normal((784, 256)).astype(np.float32)
    v = rng.standard_normal(1 << 16).astype(np.float32)
    x = rng.standard_normal((8, 3, 32, 32)).astype(np.float32)
    w = rng.standard_normal((16, 3, 5, 5)).astype(np.float32)
    bias = rng.standard_normal(16).astype(np.float32)
    zero = np.float32(0.0)
    yield "matmul 128x784x256", lambda m: m.matmul(a, b), 5
    yield "threshold_leaky 64k", lambda m: m.threshold_leaky(v, zero, zero), 50
    yield "threshold_obl 64k", lambda m: m.threshold_obl(v, zero, zero), 50
    yield "conv2d 8x3x32x32/16", lambda m: m.conv2d(x, w, bias, 1, 1, 0, 0), 3
    yield "maxpool2d 2x2", lambda m: m.maxpool2d(x, 2, 2, 2, 2), 20


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args()
    rng = np.random.default_rng(0)
    rows = []
    for name, fn, number in cases(rng):
        t_np = best_of(lambda: fn(numpy_impl), args.repeats, number)
        if numba_impl is not None:
            fn(numba_impl)  # compile before timing
            t_nb = best_of(lambda: fn(numba_impl), args.repeats, number)
            rows.append((name, t_np * 1e3, t_nb * 1e3, t_np / t_nb))
        else:
            rows.append((name, t_np * 1e3, None, None))
    print(f"{'kernel':<24} {'numpy_ms':>10} {'numba_ms':>10} {'speedup':>8}")
    for name, t_np, t_nb, sp in rows:
        if t_nb is None:
            print(f"{name:<24} {t_np:>10.3f} {'n/a':>10} {'n/a':>8}")
        else:
            print(f"{name:<24} {t_np:>10.3f} {t_nb:>10.3f} {sp:>8.1f}x")


if __name__ == "__main__":
    main()
