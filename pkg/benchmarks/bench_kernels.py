"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

import msic.kernels as K


def workload(seed: int = 0):
    rng = np.random.default_rng(seed)
    n_codes = 90
    rows = [sorted(np.flatnonzero(rng.random(n_codes) < 0.12).tolist()) for _ in range(1500)]
    csr = K.to_csr(rows)
    src = np.arange(len(rows) - 1, dtype=np.int64)
    q = K.to_csr(rows[:300])
    s = K.to_csr(rows[300:900])
    a = rng.integers(0, 50, size=400).astype(np.int64)
    b = rng.integers(0, 50, size=400).astype(np.int64)
    return {
        "pair_counts": lambda m: m.pair_counts(*csr, n_codes),
        "seq_pair_counts": lambda m: m.seq_pair_counts(*csr, src, src + 1, n_codes),
        "nearest_jaccard": lambda m: m.nearest_jaccard(*q, *s),
        "max_overlap": lambda m: m.max_overlap(*q, *s),
        "lcs_length": lambda m: m.lcs_length(a, b),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if K.compiled_backend is None:
        print("compiled kernels not built; run `pip install -e .` with Cython available")
    print(f"{'kernel':<18}{'python [ms]':>14}{'cython [ms]':>14}{'speed-up':>10}")
    for name, run in workload().items():
        py = min(timeit.repeat(lambda: run(K.python_backend), number=1, repeat=args.repeat)) * 1e3
        if K.compiled_backend is not None:
            cy = min(timeit.repeat(lambda: run(K.compiled_backend), number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<18}{py:>14.2f}{cy:>14.3f}{py / cy:>9.0f}x")
        else:
            print(f"{name:<18}{py:>14.2f}{'n/a':>14}{'':>10}")


if __name__ == "__main__":
    main()
