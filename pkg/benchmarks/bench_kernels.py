"""Timing comparison of the two kernel backends.

Runs each hot kernel (depthwise conv forward/backward, pointwise conv
forward/backward, band-constrained argmax) on a training-shaped workload
under the pure-numpy implementation and, when available, the compiled
twins.  The compiled path pays a one-time JIT cost, so each kernel is
warmed before timing.

    python benchmarks/bench_kernels.py [--batch 16] [--length 128] [--repeat 20]
"""

import argparse
import time

import numpy as np

from xlqa.kernels import numpy_impl

try:
    from xlqa.kernels import numba_impl
except ImportError:
    numba_impl = None


def timeit(fn, args, repeat):
    fn(*args)  # warm-up (JIT compile + cache effects)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(batch, length, channels, kernel, rng):
    x = rng.standard_normal((batch, length, channels)).astype(np.float32)
    dk = rng.standard_normal((kernel, channels)).astype(np.float32)
    pw = rng.standard_normal((1, channels, channels)).astype(np.float32)
    gy = rng.standard_normal((batch, length, channels)).astype(np.float32)
    p1 = rng.random(length)
    p2 = rng.random(length)
    return [
        ("depthwise_fwd", "depthwise_conv1d_fwd", (x, dk)),
        ("depthwise_bwd", "depthwise_conv1d_bwd", (x, dk, gy)),
        ("pointwise_fwd", "conv1d_fwd", (x, pw)),
        ("pointwise_bwd", "conv1d_bwd", (x, pw, gy)),
        ("band_argmax", "band_argmax", (p1, p2, 30)),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--length", type=int, default=128)
    ap.add_argument("--channels", type=int, default=96)
    ap.add_argument("--kernel", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.Generator(np.random.PCG64(0))
    cases = workloads(args.batch, args.length, args.channels, args.kernel, rng)

    print(f"shapes: x=({args.batch},{args.length},{args.channels}) "
          f"k={args.kernel}, best of {args.repeat}")
    print(f"{'kernel':<16} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for label, name, inputs in cases:
        t_np = timeit(getattr(numpy_impl, name), inputs, args.repeat)
        if numba_impl is None:
            print(f"{label:<16} {t_np * 1e3:9.2f}ms {'n/a':>10} {'':>8}")
            continue
        t_nb = timeit(getattr(numba_impl, name), inputs, args.repeat)
        print(f"{label:<16} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms "
              f"{t_np / t_nb:7.1f}x")
    if numba_impl is None:
        print("compiled backend unavailable (numba not importable)")


if __name__ == "__main__":
    main()
