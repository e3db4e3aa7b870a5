# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled counting and nearest-neighbour kernels over CSR event lists.

Rows are sorted, duplicate-free index lists stored as (indptr, indices).
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def pair_counts(const long long[::1] indptr, const int[::1] indices, int n):
    """Unordered within-row pair counts into the upper triangle of an (n, n) matrix."""
    cdef cnp.ndarray[long long, ndim=2] out = np.zeros((n, n), dtype=np.int64)
    cdef long long[:, ::1] c = out
    cdef Py_ssize_t r, i, j, lo, hi
    cdef Py_ssize_t rows = indptr.shape[0] - 1
    for r in range(rows):
        lo = indptr[r]
        hi = indptr[r + 1]
        for i in range(lo, hi):
            for j in range(i + 1, hi):
                c[indices[i], indices[j]] += 1
    return out


def seq_pair_counts(const long long[::1] indptr, const int[::1] indices,
                    const long long[::1] src, const long long[::1] dst, int n):
    """Ordered pair counts (a in row src[k], b in row dst[k])."""
    cdef cnp.ndarray[long long, ndim=2] out = np.zeros((n, n), dtype=np.int64)
    cdef long long[:, ::1] c = out
    cdef Py_ssize_t k, i, j
    for k in range(src.shape[0]):
        for i in range(indptr[src[k]], indptr[src[k] + 1]):
            for j in range(indptr[dst[k]], indptr[dst[k] + 1]):
                c[indices[i], indices[j]] += 1
    return out


cdef inline Py_ssize_t _intersect(const int[::1] a, Py_ssize_t a0, Py_ssize_t a1,
                                  const int[::1] b, Py_ssize_t b0, Py_ssize_t b1) nogil:
    cdef Py_ssize_t n = 0
    while a0 < a1 and b0 < b1:
        if a[a0] == b[b0]:
            n += 1
            a0 += 1
            b0 += 1
        elif a[a0] < b[b0]:
            a0 += 1
        else:
            b0 += 1
    return n


def nearest_jaccard(const long long[::1] q_ptr, const int[::1] q_idx,
                    const long long[::1] s_ptr, const int[::1] s_idx):
    """Index of and distance to the nearest candidate row for each query row."""
    cdef Py_ssize_t nq = q_ptr.shape[0] - 1
    cdef Py_ssize_t ns = s_ptr.shape[0] - 1
    cdef cnp.ndarray[long long, ndim=1] best_i = np.zeros(nq, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] best_d = np.ones(nq, dtype=np.float64)
    cdef Py_ssize_t q, s, inter, union
    cdef double d, bd
    cdef long long bi
    for q in range(nq):
        bd = 2.0
        bi = 0
        for s in range(ns):
            inter = _intersect(q_idx, q_ptr[q], q_ptr[q + 1], s_idx, s_ptr[s], s_ptr[s + 1])
            union = (q_ptr[q + 1] - q_ptr[q]) + (s_ptr[s + 1] - s_ptr[s]) - inter
            d = 0.0 if union == 0 else 1.0 - (<double>inter) / union
            if d < bd:
                bd = d
                bi = s
                if bd == 0.0:
                    break
        best_i[q] = bi
        best_d[q] = bd if ns > 0 else 1.0
    return best_i, best_d


def max_overlap(const long long[::1] q_ptr, const int[::1] q_idx,
                const long long[::1] s_ptr, const int[::1] s_idx):
    """Index of the candidate sharing the most items with each query row."""
    cdef Py_ssize_t nq = q_ptr.shape[0] - 1
    cdef Py_ssize_t ns = s_ptr.shape[0] - 1
    cdef cnp.ndarray[long long, ndim=1] best_i = np.zeros(nq, dtype=np.int64)
    cdef cnp.ndarray[long long, ndim=1] best_n = np.zeros(nq, dtype=np.int64)
    cdef Py_ssize_t q, s, inter, bn, size_q
    cdef long long bi
    for q in range(nq):
        bn = -1
        bi = 0
        size_q = q_ptr[q + 1] - q_ptr[q]
        for s in range(ns):
            inter = _intersect(q_idx, q_ptr[q], q_ptr[q + 1], s_idx, s_ptr[s], s_ptr[s + 1])
            if inter > bn:
                bn = inter
                bi = s
                if bn == size_q:
                    break
        best_i[q] = bi
        best_n[q] = bn if bn > 0 else 0
    return best_i, best_n


def lcs_length(const long long[::1] a, const long long[::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0 or m == 0:
        return 0
    cdef cnp.ndarray[long long, ndim=1] prev_arr = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.ndarray[long long, ndim=1] cur_arr = np.zeros(m + 1, dtype=np.int64)
    cdef long long[::1] prev = prev_arr
    cdef long long[::1] cur = cur_arr
    cdef long long[::1] tmp
    cdef Py_ssize_t i, j
    for i in range(1, n + 1):
        cur[0] = 0
        for j in range(1, m + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            elif prev[j] >= cur[j - 1]:
                cur[j] = prev[j]
            else:
                cur[j] = cur[j - 1]
        tmp = prev
        prev = cur
        cur = tmp
    return int(prev[m])
