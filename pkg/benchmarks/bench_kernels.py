"""Time the compiled kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from randkrylov import _kernels_py

try:
    from randkrylov import _kernels
except ImportError:
    _kernels = None


def _fwht_case(n, k, rng):
    x = rng.standard_normal((n, k))
    return lambda mod: mod.fwht_inplace(x.copy())


def _hash_case(n, l, s, k, rng):
    rows = np.empty((n, s), dtype=np.int64)
    for i in range(n):
        rows[i] = rng.choice(l, size=s, replace=False)
    vals = rng.choice([-1.0, 1.0], size=(n, s)) / np.sqrt(s)
    X = rng.standard_normal((n, k))

    def run(mod):
        mod.hash_apply(rows, vals, X, np.zeros((l, k)))

    return run


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    cases = [
        ("fwht n=4096 k=1", _fwht_case(4096, 1, rng)),
        ("fwht n=4096 k=50", _fwht_case(4096, 50, rng)),
        ("fwht n=65536 k=8", _fwht_case(65536, 8, rng)),
        ("hash n=4096 l=1200 s=8 k=1", _hash_case(4096, 1200, 8, 1, rng)),
        ("hash n=4096 l=1200 s=8 k=50", _hash_case(4096, 1200, 8, 50, rng)),
        ("hash n=65536 l=2000 s=8 k=8", _hash_case(65536, 2000, 8, 8, rng)),
    ]
    print(f"{'case':32s} {'numpy [ms]':>12s} {'cython [ms]':>12s} {'speed-up':>9s}")
    for name, fn in cases:
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _kernels is None:
            print(f"{name:32s} {t_py:12.3f} {'n/a':>12s} {'':>9s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {t_py:12.3f} {t_c:12.3f} {t_py / t_c:8.1f}x")


if __name__ == "__main__":
    main()
