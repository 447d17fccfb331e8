from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from ijvar import _pykernels as py
from ijvar import _backend

ck = pytest.importorskip("ijvar._ckernels")


def test_backend_is_selected():
    assert _backend.BACKEND in ("cython", "python")


@pytest.mark.parametrize("n,parts", [(1, 1), (3, 3), (4, 2), (5, 5), (2, 6)])
def test_compositions_agree(n, parts):
    a, b = ck.compositions(n, parts), py.compositions(n, parts)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (math.comb(n + parts - 1, parts - 1), parts)
    assert np.all(a.sum(axis=1) == n)
    # descending lexicographic order
    rows = [tuple(r) for r in a]
    assert rows == sorted(rows, reverse=True)


@pytest.mark.parametrize("n,k", [(5, 1), (6, 3), (8, 8), (10, 4)])
def test_combinations_and_ranks_agree(n, k):
    a, b = ck.combinations(n, k), py.combinations(n, k)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, np.array(list(itertools.combinations(range(n), k))))
    ranks = np.arange(a.shape[0])
    np.testing.assert_array_equal(ck.rank_combinations(a, n), ranks)
    np.testing.assert_array_equal(py.rank_combinations(a, n), ranks)
    np.testing.assert_array_equal(ck.unrank_combinations(ranks[::-1].copy(), n, k), a[::-1])
    np.testing.assert_array_equal(py.unrank_combinations(ranks[::-1].copy(), n, k), a[::-1])


def test_sums_are_bit_identical(rng):
    n = 9
    rows = np.sort(np.stack([rng.choice(n, 4, replace=False) for _ in range(300)]), axis=1)
    vals = rng.normal(size=300)
    assert np.array_equal(ck.scatter_sums(rows, vals, n), py.scatter_sums(rows, vals, n))
    assert np.array_equal(ck.pair_sums(rows, vals, n), py.pair_sums(rows, vals, n))
    P = ck.pair_sums(rows, vals, n)
    np.testing.assert_array_equal(P, P.T)
    i, j = 1, 5
    both = np.any(rows == i, axis=1) & np.any(rows == j, axis=1)
    assert P[i, j] == pytest.approx(vals[both].sum())


def test_splitmix_uniforms_agree():
    pos = np.array([0, 1, 2, 10, 2**40], dtype=np.int64)
    for key in (0, 1, 2**63 + 5):
        a, b = ck.splitmix_uniforms(key, pos), py.splitmix_uniforms(key, pos)
        assert np.array_equal(a, b)
        assert np.all((a >= 0) & (a < 1))
