from collections import Counter
from itertools import combinations, product

import numpy as np
import pytest

import msic.kernels as K

BACKENDS = [K.python_backend] + ([K.compiled_backend] if K.compiled_backend else [])


def random_rows(rng, n_rows, n_codes, density=0.3):
    return [sorted(np.flatnonzero(rng.random(n_codes) < density).tolist()) for _ in range(n_rows)]


@pytest.fixture(params=BACKENDS, ids=lambda b: b.__name__.rsplit(".", 1)[-1])
def backend(request):
    return request.param


@pytest.mark.parametrize("seed", range(5))
def test_pair_counts_match_dict_oracle(backend, seed):
    rng = np.random.default_rng(seed)
    rows = random_rows(rng, 30, 12)
    oracle = Counter(pair for row in rows for pair in combinations(row, 2))
    got = backend.pair_counts(*K.to_csr(rows), 12)
    assert {(a, b): int(got[a, b]) for a, b in zip(*np.nonzero(got))} == dict(oracle)


@pytest.mark.parametrize("seed", range(5))
def test_seq_pair_counts_match_dict_oracle(backend, seed):
    rng = np.random.default_rng(seed)
    rows = random_rows(rng, 20, 9)
    src = np.arange(19, dtype=np.int64)
    oracle = Counter(p for i in range(19) for p in product(rows[i], rows[i + 1]))
    got = backend.seq_pair_counts(*K.to_csr(rows), src, src + 1, 9)
    assert {(a, b): int(got[a, b]) for a, b in zip(*np.nonzero(got))} == dict(oracle)


def brute_nearest(queries, cands):
    out = []
    for q in queries:
        dists = [0.0 if not (set(q) | set(c)) else 1 - len(set(q) & set(c)) / len(set(q) | set(c))
                 for c in cands]
        best = min(dists)
        out.append((dists.index(best), best))
    return out


@pytest.mark.parametrize("seed", range(5))
def test_nearest_jaccard(backend, seed):
    rng = np.random.default_rng(seed)
    queries, cands = random_rows(rng, 15, 10, 0.25), random_rows(rng, 25, 10, 0.25)
    idx, dist = backend.nearest_jaccard(*K.to_csr(queries), *K.to_csr(cands))
    for (bi, bd), i, d in zip(brute_nearest(queries, cands), idx, dist):
        assert i == bi and d == pytest.approx(bd, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_max_overlap(backend, seed):
    rng = np.random.default_rng(seed)
    queries, cands = random_rows(rng, 15, 8), random_rows(rng, 25, 8)
    idx, n = backend.max_overlap(*K.to_csr(queries), *K.to_csr(cands))
    for q, i, k in zip(queries, idx, n):
        overlaps = [len(set(q) & set(c)) for c in cands]
        assert k == max(overlaps) and i == overlaps.index(max(overlaps))


def test_ties_go_to_lowest_index(backend):
    idx, _ = backend.nearest_jaccard(*K.to_csr([[1, 2]]), *K.to_csr([[5], [1], [2]]))
    assert idx[0] == 1
    idx, _ = backend.max_overlap(*K.to_csr([[1, 2]]), *K.to_csr([[5], [2], [1]]))
    assert idx[0] == 1


def test_empty_rows(backend):
    idx, dist = backend.nearest_jaccard(*K.to_csr([[]]), *K.to_csr([[3], []]))
    assert idx[0] == 1 and dist[0] == 0.0


def brute_lcs(a, b):
    # Recursive definition with memoization; structurally different from the table DP.
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))

    return go(0, 0)


@pytest.mark.parametrize("seed", range(10))
def test_lcs(backend, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 4, size=int(rng.integers(0, 12)))
    b = rng.integers(0, 4, size=int(rng.integers(0, 12)))
    got = backend.lcs_length(a.astype(np.int64), b.astype(np.int64))
    assert got == brute_lcs(tuple(a.tolist()), tuple(b.tolist()))


def test_backend_selection_reports_active_module():
    assert K.BACKEND in ("cython", "python")
