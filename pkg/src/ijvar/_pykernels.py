"""Pure-Python/numpy versions of the compiled kernels in ``_ckernels``."""

from __future__ import annotations

import itertools
from math import comb

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def compositions(n: int, parts: int) -> np.ndarray:
    """All compositions of ``n`` into ``parts`` non-negative parts, descending lex order."""
    total = comb(n + parts - 1, parts - 1)
    out = np.zeros((total, parts), dtype=np.int64)
    if parts == 1:
        out[0, 0] = n
        return out
    # stars and bars: choosing bar positions in lex order gives ascending
    # first parts, so walk the bar sets in reverse
    for row, bars in enumerate(itertools.combinations(range(n + parts - 1), parts - 1)):
        prev = -1
        comp = []
        for b in bars:
            comp.append(b - prev - 1)
            prev = b
        comp.append(n + parts - 2 - prev)
        out[total - 1 - row] = comp
    return out


def combinations(n: int, k: int) -> np.ndarray:
    """All k-subsets of ``range(n)`` in lexicographic order."""
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), k)),
        dtype=np.int64,
        count=comb(n, k) * k,
    )
    return flat.reshape(comb(n, k), k)


def _binom_table(n: int, k: int) -> list[list[int]]:
    return [[comb(a, b) for b in range(k + 1)] for a in range(n + 1)]


def rank_combinations(rows, n: int) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    m, k = rows.shape
    tab = _binom_table(n, k)
    out = np.zeros(m, dtype=np.int64)
    for row in range(m):
        acc = 0
        prev = -1
        for i in range(k):
            c = int(rows[row, i])
            for v in range(prev + 1, c):
                acc += tab[n - 1 - v][k - 1 - i]
            prev = c
        out[row] = acc
    return out


def unrank_combinations(ranks, n: int, k: int) -> np.ndarray:
    ranks = np.asarray(ranks, dtype=np.int64)
    tab = _binom_table(n, k)
    out = np.empty((ranks.shape[0], k), dtype=np.int64)
    for row, rem in enumerate(ranks.tolist()):
        v = 0
        for i in range(k):
            while rem >= tab[n - 1 - v][k - 1 - i]:
                rem -= tab[n - 1 - v][k - 1 - i]
                v += 1
            out[row, i] = v
            v += 1
    return out


def scatter_sums(rows, values, n: int) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    # bincount adds in row-major order, matching the compiled loop
    return np.bincount(rows.ravel(), weights=np.repeat(values, rows.shape[1]), minlength=n)


def pair_sums(rows, values, n: int) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    a_idx, b_idx = np.triu_indices(rows.shape[1], k=1)
    flat = (rows[:, a_idx] * n + rows[:, b_idx]).ravel()
    out = np.bincount(flat, weights=np.repeat(values, a_idx.size), minlength=n * n)
    out = out.reshape(n, n)
    iu = np.triu_indices(n, k=1)
    out[(iu[1], iu[0])] = out[iu]
    return out


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix_uniforms(key: int, positions) -> np.ndarray:
    p = np.asarray(positions, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(np.uint64(key) + (p + np.uint64(1)) * _GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
