"""Compare the numba and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--terms 200] [--repeat 5]

Times the raw pair enumeration, the key combine step, a full series product
and a Moyal star product on random inputs.  Each workload runs once per
backend before timing so that numba compilation is excluded.
"""

from __future__ import annotations

import argparse
import random
import time

import numpy as np

from dqindex import _kernels, sampling
from dqindex.poisson import standard_pi
from dqindex.starprod import moyal_star, star_mul
from dqindex.weyl import ModelConfig, series_mul


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(terms, seed):
    rng = random.Random(seed)
    m = ModelConfig("plane", 3, Y_max=6, H_max=3, T_max=3)
    a = sampling.series(rng, m, terms)
    b = sampling.series(rng, m, terms)
    keys = np.concatenate([a.keys, b.keys, a.keys])
    coefs = np.concatenate([a.coefs, b.coefs, -a.coefs])

    p = ModelConfig("plane", 2, Y_max=0, H_max=4, X_max=8)
    star = moyal_star(standard_pi(p))
    f = sampling.base_function(rng, p, max(terms // 20, 4), 3)
    g = sampling.base_function(rng, p, max(terms // 20, 4), 3)
    return {
        "product_pairs": lambda: _kernels.product_pairs(
            a._kernel_view(), b._kernel_view(), m._limits),
        "combine": lambda: _kernels.combine(keys, coefs),
        "series_mul": lambda: series_mul(a, b),
        "star_mul": lambda: star_mul(f, g, star),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--terms", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    if not _kernels.HAVE_NUMBA:
        print("numba unavailable, timing the numpy backend only")
    jobs = workloads(args.terms, args.seed)
    print(f"{'workload':<15}" + "".join(f"{b:>12}" for b in backends)
          + ("     speedup" if len(backends) > 1 else ""))
    previous = _kernels.backend()
    try:
        for name, fn in jobs.items():
            row = {}
            for b in backends:
                _kernels.set_backend(b)
                row[b] = best_of(fn, args.repeat)
            line = f"{name:<15}" + "".join(f"{row[b] * 1e3:>10.2f}ms" for b in backends)
            if "numba" in row:
                line += f"{row['numpy'] / row['numba']:>11.1f}x"
            print(line)
    finally:
        _kernels.set_backend(previous)


if __name__ == "__main__":
    main()
