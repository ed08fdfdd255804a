# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for TER shift search and CART split scanning.

Semantics match ``_kernels_py`` exactly; see that module for the contracts.
"""

from libc.stdlib cimport malloc, free
from libc.math cimport INFINITY
from libc.stdint cimport int64_t

import numpy as np


cdef Py_ssize_t _lev(const int64_t* a, Py_ssize_t n, const int64_t* b, Py_ssize_t m,
                     Py_ssize_t* prev, Py_ssize_t* cur) noexcept nogil:
    cdef Py_ssize_t i, j, best, t
    cdef Py_ssize_t* tmp
    for j in range(m + 1):
        prev[j] = j
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            best = prev[j - 1] + (a[i - 1] != b[j - 1])
            t = prev[j] + 1
            if t < best:
                best = t
            t = cur[j - 1] + 1
            if t < best:
                best = t
            cur[j] = best
        tmp = prev
        prev = cur
        cur = tmp
    return prev[m]


def _as_ids(seq):
    return np.ascontiguousarray(np.asarray(seq, dtype=np.int64).reshape(-1))


def levenshtein(hyp, ref):
    cdef const int64_t[::1] a = _as_ids(hyp)
    cdef const int64_t[::1] b = _as_ids(ref)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t* buf = <Py_ssize_t*> malloc(2 * (m + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t out
    if buf == NULL:
        raise MemoryError()
    try:
        out = _lev(&a[0] if n else NULL, n, &b[0] if m else NULL, m, buf, buf + m + 1)
    finally:
        free(buf)
    return int(out)


def edit_ops(hyp, ref):
    cdef const int64_t[::1] a = _as_ids(hyp)
    cdef const int64_t[::1] b = _as_ids(ref)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t w = m + 1
    cdef Py_ssize_t i, j, best, t
    cdef Py_ssize_t ins = 0, dels = 0, subs = 0
    cdef Py_ssize_t* d = <Py_ssize_t*> malloc((n + 1) * w * sizeof(Py_ssize_t))
    if d == NULL:
        raise MemoryError()
    try:
        for j in range(w):
            d[j] = j
        for i in range(1, n + 1):
            d[i * w] = i
            for j in range(1, m + 1):
                best = d[(i - 1) * w + j - 1] + (a[i - 1] != b[j - 1])
                t = d[(i - 1) * w + j] + 1
                if t < best:
                    best = t
                t = d[i * w + j - 1] + 1
                if t < best:
                    best = t
                d[i * w + j] = best
        i = n
        j = m
        while i > 0 or j > 0:
            if i > 0 and j > 0 and d[i * w + j] == d[(i - 1) * w + j - 1] + (a[i - 1] != b[j - 1]):
                if a[i - 1] != b[j - 1]:
                    subs += 1
                i -= 1
                j -= 1
            elif i > 0 and d[i * w + j] == d[(i - 1) * w + j] + 1:
                dels += 1
                i -= 1
            else:
                ins += 1
                j -= 1
    finally:
        free(d)
    return int(ins), int(dels), int(subs)


cdef bint _in_ref(const int64_t* block, Py_ssize_t l, const int64_t* ref, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t j, k
    for j in range(m - l + 1):
        k = 0
        while k < l and ref[j + k] == block[k]:
            k += 1
        if k == l:
            return True
    return False


def best_shift(hyp, ref, int max_block, int max_dist):
    cdef const int64_t[::1] a = _as_ids(hyp)
    cdef const int64_t[::1] b = _as_ids(ref)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t start, length, dest, k, pos, cur, gain, maxlen
    cdef Py_ssize_t best_gain = 0, best_start = -1, best_len = -1, best_dest = -1
    cdef Py_ssize_t* rows
    cdef int64_t* rest
    cdef int64_t* cand
    if n == 0 or m == 0 or max_block <= 0:
        return 0, -1, -1, -1
    rows = <Py_ssize_t*> malloc(2 * (m + 1) * sizeof(Py_ssize_t))
    rest = <int64_t*> malloc(n * sizeof(int64_t))
    cand = <int64_t*> malloc(n * sizeof(int64_t))
    if rows == NULL or rest == NULL or cand == NULL:
        free(rows); free(rest); free(cand)
        raise MemoryError()
    try:
        with nogil:
            cur = _lev(&a[0], n, &b[0], m, rows, rows + m + 1)
            for start in range(n):
                maxlen = n - start
                if max_block < maxlen:
                    maxlen = max_block
                for length in range(1, maxlen + 1):
                    if not _in_ref(&a[start], length, &b[0], m):
                        break
                    pos = 0
                    for k in range(n):
                        if k < start or k >= start + length:
                            rest[pos] = a[k]
                            pos += 1
                    for dest in range(n - length + 1):
                        if dest == start:
                            continue
                        if dest - start > max_dist or start - dest > max_dist:
                            continue
                        for k in range(dest):
                            cand[k] = rest[k]
                        for k in range(length):
                            cand[dest + k] = a[start + k]
                        for k in range(dest, n - length):
                            cand[k + length] = rest[k]
                        gain = cur - _lev(cand, n, &b[0], m, rows, rows + m + 1)
                        if gain > best_gain:
                            best_gain = gain
                            best_start = start
                            best_len = length
                            best_dest = dest
    finally:
        free(rows); free(rest); free(cand)
    return int(best_gain), int(best_start), int(best_len), int(best_dest)


def split_scan(x, y, w, Py_ssize_t min_leaf):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t i, best_i = -1
    cdef double tw = 0.0, ts = 0.0, lw = 0.0, ls = 0.0, rw, rs, score
    cdef double best = -INFINITY
    if n < 2 * min_leaf:
        return -np.inf, -1
    with nogil:
        for i in range(n):
            tw = tw + wv[i]
            ts = ts + wv[i] * yv[i]
        for i in range(n - 1):
            lw = lw + wv[i]
            ls = ls + wv[i] * yv[i]
            if not (xv[i] < xv[i + 1]):
                continue
            if i + 1 < min_leaf or n - i - 1 < min_leaf:
                continue
            rw = tw - lw
            rs = ts - ls
            if not (lw > 0 and rw > 0):
                continue
            score = ls * ls / lw + rs * rs / rw
            if score > best:
                best = score
                best_i = i
    if best_i < 0:
        return -np.inf, -1
    return float(best), int(best_i)
