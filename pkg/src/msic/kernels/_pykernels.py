"""Pure-Python versions of the compiled kernels, used when the extension is absent."""
from __future__ import annotations

import numpy as np


def pair_counts(indptr, indices, n):
    out = np.zeros((n, n), dtype=np.int64)
    for r in range(len(indptr) - 1):
        row = indices[indptr[r]:indptr[r + 1]].tolist()
        for i in range(len(row)):
            for j in range(i + 1, len(row)):
                out[row[i], row[j]] += 1
    return out


def seq_pair_counts(indptr, indices, src, dst, n):
    out = np.zeros((n, n), dtype=np.int64)
    for a, b in zip(src.tolist(), dst.tolist()):
        left = indices[indptr[a]:indptr[a + 1]]
        right = indices[indptr[b]:indptr[b + 1]]
        if len(left) and len(right):
            out[np.ix_(left, right)] += 1
    return out


def _rows(ptr, idx):
    return [set(idx[ptr[r]:ptr[r + 1]].tolist()) for r in range(len(ptr) - 1)]


def nearest_jaccard(q_ptr, q_idx, s_ptr, s_idx):
    queries, cands = _rows(q_ptr, q_idx), _rows(s_ptr, s_idx)
    best_i = np.zeros(len(queries), dtype=np.int64)
    best_d = np.ones(len(queries), dtype=np.float64)
    for qi, q in enumerate(queries):
        bd, bi = 2.0, 0
        for si, s in enumerate(cands):
            union = len(q | s)
            d = 0.0 if union == 0 else 1.0 - len(q & s) / union
            if d < bd:
                bd, bi = d, si
                if bd == 0.0:
                    break
        best_i[qi] = bi
        best_d[qi] = bd if cands else 1.0
    return best_i, best_d


def max_overlap(q_ptr, q_idx, s_ptr, s_idx):
    queries, cands = _rows(q_ptr, q_idx), _rows(s_ptr, s_idx)
    best_i = np.zeros(len(queries), dtype=np.int64)
    best_n = np.zeros(len(queries), dtype=np.int64)
    for qi, q in enumerate(queries):
        bn, bi = -1, 0
        for si, s in enumerate(cands):
            n = len(q & s)
            if n > bn:
                bn, bi = n, si
                if bn == len(q):
                    break
        best_i[qi] = bi
        best_n[qi] = max(bn, 0)
    return best_i, best_n


def lcs_length(a, b):
    a, b = list(a), list(b)
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]
