# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled combinatorial kernels.

Each function here has a pure-Python twin in ``_pykernels`` with identical
output (bit-for-bit for the floating point reductions, since the loop order
is the same).
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t

cnp.import_array()


def compositions(Py_ssize_t n, Py_ssize_t parts):
    """All compositions of ``n`` into ``parts`` non-negative parts.

    Rows come in descending lexicographic order, so ``(n, 0, ..., 0)`` is
    first and ``(0, ..., 0, n)`` last.
    """
    from math import comb
    cdef Py_ssize_t total = comb(n + parts - 1, parts - 1)
    out = np.zeros((total, parts), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef int64_t[::1] cur = np.zeros(parts, dtype=np.int64)
    cdef Py_ssize_t row = 0, i, j, rest
    if parts == 1:
        o[0, 0] = n
        return out
    cur[0] = n
    while True:
        for j in range(parts):
            o[row, j] = cur[j]
        row += 1
        # find the rightmost non-last slot with a positive count
        i = parts - 2
        while i >= 0 and cur[i] == 0:
            i -= 1
        if i < 0:
            break
        rest = cur[parts - 1]
        cur[parts - 1] = 0
        cur[i] -= 1
        cur[i + 1] = rest + 1
    return out


def combinations(Py_ssize_t n, Py_ssize_t k):
    """All k-subsets of ``range(n)`` in lexicographic order, one per row."""
    from math import comb
    cdef Py_ssize_t total = comb(n, k)
    out = np.empty((total, k), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef int64_t[::1] c = np.arange(k, dtype=np.int64)
    cdef Py_ssize_t row, i, j
    if k == 0:
        return out
    for row in range(total):
        for j in range(k):
            o[row, j] = c[j]
        i = k - 1
        while i >= 0 and c[i] == n - k + i:
            i -= 1
        if i < 0:
            break
        c[i] += 1
        for j in range(i + 1, k):
            c[j] = c[j - 1] + 1
    return out


cdef object _binom_table(Py_ssize_t n, Py_ssize_t k):
    tab = np.zeros((n + 1, k + 1), dtype=np.int64)
    cdef int64_t[:, ::1] t = tab
    cdef Py_ssize_t a, b
    for a in range(n + 1):
        t[a, 0] = 1
        for b in range(1, min(a, k) + 1):
            t[a, b] = t[a - 1, b - 1] + (t[a - 1, b] if b <= a - 1 else 0)
    return tab


def rank_combinations(rows, Py_ssize_t n):
    """Lexicographic ranks of sorted 0-based k-subsets of ``range(n)``."""
    cdef int64_t[:, ::1] r = np.ascontiguousarray(rows, dtype=np.int64)
    cdef Py_ssize_t m = r.shape[0], k = r.shape[1]
    out = np.zeros(m, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef int64_t[:, ::1] t = _binom_table(n, k)
    cdef Py_ssize_t row, i
    cdef int64_t prev, v, acc
    for row in range(m):
        acc = 0
        prev = -1
        for i in range(k):
            v = prev + 1
            while v < r[row, i]:
                acc += t[n - 1 - v, k - 1 - i]
                v += 1
            prev = r[row, i]
        o[row] = acc
    return out


def unrank_combinations(ranks, Py_ssize_t n, Py_ssize_t k):
    """Inverse of :func:`rank_combinations`."""
    cdef int64_t[::1] rk = np.ascontiguousarray(ranks, dtype=np.int64)
    cdef Py_ssize_t m = rk.shape[0]
    out = np.empty((m, k), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef int64_t[:, ::1] t = _binom_table(n, k)
    cdef Py_ssize_t row, i
    cdef int64_t rem, v, step
    for row in range(m):
        rem = rk[row]
        v = 0
        for i in range(k):
            while True:
                step = t[n - 1 - v, k - 1 - i]
                if rem < step:
                    break
                rem -= step
                v += 1
            o[row, i] = v
            v += 1
    return out


def scatter_sums(rows, values, Py_ssize_t n):
    """``out[i] = sum(values[m] for m with i in rows[m])``."""
    cdef int64_t[:, ::1] r = np.ascontiguousarray(rows, dtype=np.int64)
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t m, j
    for m in range(r.shape[0]):
        for j in range(r.shape[1]):
            o[r[m, j]] += v[m]
    return out


def pair_sums(rows, values, Py_ssize_t n):
    """Symmetric ``n x n`` table of sums over rows containing both indices."""
    cdef int64_t[:, ::1] r = np.ascontiguousarray(rows, dtype=np.int64)
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t m, a, b, k = r.shape[1]
    for m in range(r.shape[0]):
        for a in range(k):
            for b in range(a + 1, k):
                o[r[m, a], r[m, b]] += v[m]
    for a in range(n):
        for b in range(a + 1, n):
            o[b, a] = o[a, b]
    return out


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


def splitmix_uniforms(uint64_t key, positions):
    """Uniforms in [0, 1) at the given positions of a splitmix64 stream."""
    cdef uint64_t[::1] p = np.ascontiguousarray(positions, dtype=np.uint64)
    out = np.empty(p.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef uint64_t z
    for i in range(p.shape[0]):
        z = _mix(key + (p[i] + 1) * <uint64_t>0x9E3779B97F4A7C15ULL)
        o[i] = <double>(z >> 11) * (1.0 / 9007199254740992.0)
    return out
