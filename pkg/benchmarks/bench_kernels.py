"""Compare the numba and numpy kernel paths on the smoother and the tridiagonal solve.

Usage: python3 benchmarks/bench_kernels.py [--d 5] [--n 1000 4000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from fmou import _kernels
from fmou.kalman import smooth_batch


def best_of(fn, repeat):
    fn()  # warm-up (numba compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--n", type=int, nargs="+", default=[1000, 4000, 16000])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    rho = rng.uniform(0.8, 0.99, args.d)
    sigma2 = np.ones(args.d)
    tau2 = sigma2 / (1 - rho**2)
    if "numba" not in _kernels.AVAILABLE:
        print("numba unavailable; only the numpy path is timed")
    print(f"{'kernel':<10}{'n':>8}{'numba_s':>12}{'numpy_s':>12}{'speedup':>10}")
    for n in args.n:
        Y = rng.standard_normal((args.d, n))
        res = {}
        for name in _kernels.AVAILABLE:
            res[name] = best_of(lambda: smooth_batch(Y, rho, sigma2, tau2, 0.5, backend=name), args.repeat)
        _report("smoother", n, res)
        lower = np.full(n, -1.0)
        upper = np.full(n, -1.0)
        diag = np.full(n, 3.0)
        u = rng.standard_normal(n)
        res = {}
        for name, fn in _kernels.IMPLICIT_STEPS.items():
            res[name] = best_of(lambda: fn(lower, diag, upper, u, 1.0, 10), args.repeat)
        _report("implicit", n, res)


def _report(label, n, res):
    nb, npy = res.get("numba"), res["numpy"]
    speed = f"{npy / nb:10.1f}" if nb else f"{'-':>10}"
    nb_s = f"{nb:12.5f}" if nb else f"{'-':>12}"
    print(f"{label:<10}{n:>8}{nb_s}{npy:12.5f}{speed}")


if __name__ == "__main__":
    main()
