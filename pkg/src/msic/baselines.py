"""Reference generators: marginal Bernoulli, verbatim copy, and data-independent noise."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .data import EVENT_KINDS, Corpus, PatientRecord, Visit, Vocabulary
from .errors import ParameterError


def _visit_count_distribution(corpus: Corpus) -> np.ndarray:
    counts = np.bincount([len(r) for r in corpus.records]).astype(np.float64)
    return counts / counts.sum()


def independent_bernoulli(train: Corpus, n_records: int, seed: int = 0) -> Corpus:
    """Every code of every visit drawn independently at its training per-visit rate.

    Record lengths follow the training visit-count distribution.
    """
    if n_records < 1:
        raise ParameterError("n_records must be positive")
    n_visits = train.visit_count()
    if n_visits == 0:
        raise ParameterError("training corpus has no visits")
    rates = {}
    for k in EVENT_KINDS:
        counts = np.zeros(train.sizes[k])
        for r in train.records:
            for v in r.visits:
                counts[list(v.events(k).indices)] += 1
        rates[k] = counts / n_visits
    lengths = _visit_count_distribution(train)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_records):
        horizon = max(1, int(rng.choice(len(lengths), p=lengths)))
        visits = tuple(Visit.of(*(np.flatnonzero(rng.random(len(rates[k])) < rates[k]) for k in EVENT_KINDS))
                       for _ in range(horizon))
        records.append(PatientRecord(f"syn-{i:06d}", visits))
    return train.with_records(records)


def copy_synthesizer(train: Corpus) -> Corpus:
    """The training records themselves under fresh ids: the worst case for privacy."""
    return train.with_records(PatientRecord(f"syn-{i:06d}", r.visits) for i, r in enumerate(train.records))


def random_synthesizer(vocabularies: Mapping[str, Vocabulary], n_records: int, seed: int = 0,
                       density: float = 0.1, max_visits: int = 4) -> Corpus:
    """Records whose codes are uniform noise, independent of any real data."""
    if not 0 < density < 1:
        raise ParameterError("density must be in (0, 1)")
    rng = np.random.default_rng(seed)
    sizes = [len(vocabularies[k]) for k in EVENT_KINDS]
    records = []
    for i in range(n_records):
        horizon = int(rng.integers(1, max_visits + 1))
        visits = tuple(Visit.of(*(np.flatnonzero(rng.random(n) < density) for n in sizes)) for _ in range(horizon))
        records.append(PatientRecord(f"rnd-{i:06d}", visits))
    return Corpus(dict(vocabularies), tuple(records))
