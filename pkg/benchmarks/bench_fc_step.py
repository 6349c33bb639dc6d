"""Compare the compiled and numpy implementations of the kernel fc step.

Usage: python3 benchmarks/bench_fc_step.py [--sizes 256,1024,2048] [--reps 20]
"""

import argparse
import time

import numpy as np

from graphcondense import _gntk_np
from graphcondense.gntk import HAVE_COMPILED_KERNELS

try:
    from graphcondense import _ckernels
except ImportError:
    _ckernels = None


def make_inputs(rng, n1, n2):
    a = rng.normal(size=(n1, 8))
    b = rng.normal(size=(n2, 8))
    sig = np.ascontiguousarray(a @ b.T)
    ker = np.ascontiguousarray(rng.normal(size=(n1, n2)))
    d1 = np.ascontiguousarray(np.sum(a * a, axis=1))
    d2 = np.ascontiguousarray(np.sum(b * b, axis=1))
    return sig, ker, d1, d2


def time_impl(fn, inputs, reps):
    best = np.inf
    for _ in range(reps):
        sig, ker, d1, d2 = (x.copy() for x in inputs)
        t0 = time.perf_counter()
        fn(sig, ker, d1, d2, 2.0)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="256,1024,2048")
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(0)

    print(f"compiled extension available: {HAVE_COMPILED_KERNELS}")
    print(f"{'n':>6} {'numpy (ms)':>12} {'compiled (ms)':>14} {'speedup':>8}")
    for n in sizes:
        inputs = make_inputs(rng, n, n)
        t_np = time_impl(lambda s, k, a, b, c: _gntk_np.fc_step(s, k, a, b, c=c),
                         inputs, args.reps)
        if _ckernels is None:
            print(f"{n:>6} {1e3 * t_np:>12.3f} {'n/a':>14} {'n/a':>8}")
            continue
        t_c = time_impl(_ckernels.fc_step, inputs, args.reps)
        # verify both paths agree before trusting the timing
        s1, k1, d1, d2 = (x.copy() for x in inputs)
        s2, k2 = s1.copy(), k1.copy()
        _gntk_np.fc_step(s1, k1, d1, d2)
        _ckernels.fc_step(s2, k2, d1, d2, 2.0)
        assert np.abs(k1 - k2).max() < 1e-12, "implementations disagree"
        print(f"{n:>6} {1e3 * t_np:>12.3f} {1e3 * t_c:>14.3f} "
              f"{t_np / t_c:>7.2f}x")


if __name__ == "__main__":
    main()
