"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat R]``.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from ijvar import _pykernels as py

try:
    from ijvar import _ckernels as ck
except ImportError:  # not built
    ck = None


def cases():
    gen = np.random.default_rng(0)
    rows = np.sort(np.argsort(gen.random((200_000, 30)), axis=1)[:, :6], axis=1).astype(np.int64)
    vals = gen.normal(size=rows.shape[0])
    ranks = np.arange(0, 593_775, 7, dtype=np.int64)
    return {
        "compositions(8, 8)": lambda m: m.compositions(8, 8),
        "combinations(24, 6)": lambda m: m.combinations(24, 6),
        "rank_combinations 200k x 6": lambda m: m.rank_combinations(rows, 30),
        "unrank_combinations 85k": lambda m: m.unrank_combinations(ranks, 30, 6),
        "scatter_sums 200k x 6": lambda m: m.scatter_sums(rows, vals, 30),
        "pair_sums 200k x 6": lambda m: m.pair_sums(rows, vals, 30),
        "splitmix_uniforms 1M": lambda m: m.splitmix_uniforms(12345, np.arange(1_000_000, dtype=np.int64)),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'kernel':<30}{'python [ms]':>14}{'cython [ms]':>14}{'speed-up':>10}")
    for name, fn in cases().items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if ck is None:
            print(f"{name:<30}{t_py:>14.2f}{'n/a':>14}{'':>10}")
            continue
        t_c = min(timeit.repeat(lambda: fn(ck), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<30}{t_py:>14.2f}{t_c:>14.2f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
