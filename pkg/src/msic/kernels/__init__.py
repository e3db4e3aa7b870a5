"""Hot loops over sparse event lists.

The compiled extension is used when it was built; otherwise the pure-Python
implementations are selected. Set ``MSIC_PURE_PYTHON=1`` to force the
fallback. ``BACKEND`` names the active implementation.
"""
from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from . import _pykernels as python_backend

try:
    if os.environ.get("MSIC_PURE_PYTHON") == "1":
        raise ImportError("pure-python kernels requested")
    from . import _ckernels as compiled_backend
    _impl = compiled_backend
    BACKEND = "cython"
except ImportError:
    compiled_backend = None
    _impl = python_backend
    BACKEND = "python"


def to_csr(rows: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Sorted unique rows -> (indptr int64, indices int32)."""
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    flat: list[int] = []
    for i, row in enumerate(rows):
        flat.extend(row)
        indptr[i + 1] = len(flat)
    return indptr, np.asarray(flat, dtype=np.int32)


def pair_counts(indptr, indices, n: int) -> np.ndarray:
    return _impl.pair_counts(indptr, indices, int(n))


def seq_pair_counts(indptr, indices, src, dst, n: int) -> np.ndarray:
    return _impl.seq_pair_counts(indptr, indices, np.ascontiguousarray(src, dtype=np.int64),
                                 np.ascontiguousarray(dst, dtype=np.int64), int(n))


def nearest_jaccard(q_ptr, q_idx, s_ptr, s_idx) -> tuple[np.ndarray, np.ndarray]:
    return _impl.nearest_jaccard(q_ptr, q_idx, s_ptr, s_idx)


def max_overlap(q_ptr, q_idx, s_ptr, s_idx) -> tuple[np.ndarray, np.ndarray]:
    return _impl.max_overlap(q_ptr, q_idx, s_ptr, s_idx)


def lcs_length(a, b) -> int:
    return int(_impl.lcs_length(np.ascontiguousarray(a, dtype=np.int64),
                                np.ascontiguousarray(b, dtype=np.int64)))


__all__ = ["BACKEND", "lcs_length", "max_overlap", "nearest_jaccard", "pair_counts",
           "python_backend", "compiled_backend", "seq_pair_counts", "to_csr"]
