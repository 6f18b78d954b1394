"""Compare the compiled and pure-numpy kernel backends.

Run with ``python3 benchmarks/bench_kernels.py``; pass ``--repeat`` to change
the number of timed repetitions. Prints one line per kernel with the best
time per backend, the speed-up and the maximum absolute difference.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from paramodel import _kernels_py

try:
    from paramodel import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    N = 64
    spectrum = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    freqs = (np.fft.fftfreq(N, 1.0 / N), np.fft.fftfreq(N, 1.0 / N))
    points = rng.uniform(0.0, 1.0, (512, 2))
    yield "trig_eval 64x64, 512 points", "trig_eval", (spectrum, freqs, points)

    W = 1089
    Ku = rng.standard_normal((4, W))
    Kv = rng.standard_normal((4, W))
    G = rng.standard_normal((W, W, 3))
    yield "window_bilinear_sum 33x33 window", "window_bilinear_sum", (Ku, Kv, G)

    P, D = 20000, 4
    Fx = rng.standard_normal((P, D))
    Fy = rng.standard_normal((P, D))
    Gm = np.broadcast_to(np.eye(D), (P, D, D)).copy()
    Gm[:, 0, 1:] = rng.standard_normal((P, D - 1))
    sector_of = np.array([0, 1, 2, 2], dtype=np.int64)
    expo = np.array([1.2, 0.45, 0.2])
    dist = rng.uniform(0.01, 1.0, P)
    yield "pair_sector_ratios 20000 pairs", "pair_sector_ratios", (Fx, Fy, Gm, sector_of, expo, dist)


def best_time(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled backend not built; only the numpy backend is available", file=sys.stderr)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<36} {'numpy [ms]':>11} {'cython [ms]':>12} {'speed-up':>9} {'max diff':>10}")
    for label, name, case in cases(rng):
        py_fn = getattr(_kernels_py, name)
        t_py = best_time(py_fn, case, args.repeat)
        if _ckernels is None:
            print(f"{label:<36} {1e3 * t_py:>11.2f} {'-':>12} {'-':>9} {'-':>10}")
            continue
        c_fn = getattr(_ckernels, name)
        t_c = best_time(c_fn, case, args.repeat)
        diff = float(np.max(np.abs(np.asarray(py_fn(*case)) - np.asarray(c_fn(*case)))))
        print(f"{label:<36} {1e3 * t_py:>11.2f} {1e3 * t_c:>12.2f} {t_py / t_c:>9.2f} {diff:>10.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
