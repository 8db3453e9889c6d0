"""Timing of the compiled kernels against the numpy fallback.

Usage: ``python benchmarks/bench_kernels.py [--points N] [--repeat R]``.
Prints the best-of-R wall time per backend and the speedup.
"""

import argparse
import timeit

import numpy as np

from pshsym import kernels


def make_inputs(n_points, d, n_aff, seed=0):
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.ones(d), n_points)
    t = -rng.exponential(2.0, n_points)
    x = t[:, None] + np.log(q)
    a = rng.uniform(0, 2, (n_aff, d))
    b = rng.uniform(-3, 0, n_aff)
    return x, t, q, a, b, np.array([1.0]), np.zeros(1)


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if kernels._compiled is None:
        print("compiled kernels are not built; only the python backend is available")
        return 1
    print(f"{'kernel':<26}{'d':>3}{'pieces':>8}{'python s':>12}{'compiled s':>12}{'speedup':>9}")
    for d, n_aff in ((2, 8), (3, 8), (2, 32)):
        x, t, q, a, b, A, lb = make_inputs(args.points, d, n_aff)
        cases = {
            "toric_max": lambda be: kernels.toric_max(x, t, a, b, A, lb, backend=be),
            "softmax_ma_density": lambda be: kernels.softmax_ma_density(x, t, q, a, b, A, lb, 0.05, backend=be),
        }
        for name, fn in cases.items():
            tp = bench(lambda: fn("python"), args.repeat)
            tc = bench(lambda: fn("compiled"), args.repeat)
            print(f"{name:<26}{d:>3}{n_aff + 1:>8}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
