"""Padded batches of patient records."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..data import BOS, EMPTY, EOS, EVENT_KINDS, PAD, UNK, PatientRecord, Report, Vocabulary
from ..errors import SizeError


@dataclass
class VisitBatch:
    """Patients padded to ``T`` visits plus a flat list of the real visits.

    ``flat_index[b, t]`` is the flat row of visit ``t`` of patient ``b``, or
    ``n_visits`` (a zero pad row) past the patient's last visit.
    """

    lengths: np.ndarray
    flat_index: np.ndarray
    rows: tuple[np.ndarray, np.ndarray]
    events: dict[str, list[tuple[int, ...]]]
    reports: list[Report | None]

    @classmethod
    def from_records(cls, records: Sequence[PatientRecord]) -> "VisitBatch":
        lengths = np.array([len(r) for r in records], dtype=np.int64)
        if len(records) == 0:
            raise SizeError("empty batch")
        t_max = int(lengths.max())
        n = int(lengths.sum())
        flat_index = np.full((len(records), t_max), n, dtype=np.int64)
        rows_b, rows_t = [], []
        events = {k: [] for k in EVENT_KINDS}
        reports = []
        row = 0
        for b, rec in enumerate(records):
            for t, visit in enumerate(rec.visits):
                flat_index[b, t] = row
                rows_b.append(b)
                rows_t.append(t)
                for k in EVENT_KINDS:
                    events[k].append(visit.events(k).indices)
                reports.append(visit.report)
                row += 1
        return cls(lengths, flat_index, (np.array(rows_b), np.array(rows_t)), events, reports)

    @property
    def n_patients(self) -> int:
        return len(self.lengths)

    @property
    def n_steps(self) -> int:
        return self.flat_index.shape[1]

    @property
    def n_visits(self) -> int:
        return len(self.rows[0])

    @property
    def first_visit(self) -> np.ndarray:
        return self.rows[1] == 0

    def dense(self, kind: str, size: int) -> np.ndarray:
        out = np.zeros((self.n_visits, size), dtype=np.float32)
        for i, idx in enumerate(self.events[kind]):
            out[i, list(idx)] = 1.0
        return out

    def has_reports(self) -> bool:
        return all(r is not None for r in self.reports)


def code_tokens(sets: Sequence[Sequence[int]], empty_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Pad code sets into (N, L) ids and a keep-mask; empty sets become one ``empty_id`` token."""
    width = max([len(s) for s in sets] + [1])
    ids = np.zeros((len(sets), width), dtype=np.int64)
    mask = np.zeros((len(sets), width), dtype=np.float32)
    for i, s in enumerate(sets):
        if len(s):
            ids[i, : len(s)] = s
            mask[i, : len(s)] = 1.0
        else:
            ids[i, 0] = empty_id
            mask[i, 0] = 1.0
    return ids, mask


class WordCodec:
    """Maps report tokens to ids of the word vocabulary and back."""

    def __init__(self, vocabulary: Vocabulary, max_len: int):
        self.vocabulary = vocabulary
        self.max_len = max_len
        index = vocabulary.index
        self.pad, self.bos, self.eos = index[PAD], index[BOS], index[EOS]
        self.unk, self.empty = index[UNK], index[EMPTY]
        self.special = {self.pad, self.bos, self.eos, self.unk, self.empty}

    def __len__(self) -> int:
        return len(self.vocabulary)

    def encode(self, words: Sequence[str]) -> list[int]:
        index = self.vocabulary.index
        return [index.get(w, self.unk) for w in words[: self.max_len]]

    def decode(self, ids: Sequence[int]) -> tuple[str, ...]:
        codes = self.vocabulary.codes
        return tuple(codes[i] for i in ids if i not in (self.pad, self.bos, self.eos))

    def teacher_forcing(self, paragraphs: Sequence[Sequence[str]]):
        """(inputs, targets, mask) arrays of shape (N, L+1) for ``<bos> w`` -> ``w <eos>``."""
        encoded = [self.encode(p) for p in paragraphs]
        width = max(len(e) for e in encoded) + 1
        inputs = np.full((len(encoded), width), self.pad, dtype=np.int64)
        targets = np.full((len(encoded), width), self.pad, dtype=np.int64)
        mask = np.zeros((len(encoded), width), dtype=np.float32)
        for i, e in enumerate(encoded):
            inputs[i, 0] = self.bos
            inputs[i, 1: len(e) + 1] = e
            targets[i, : len(e)] = e
            targets[i, len(e)] = self.eos
            mask[i, : len(e) + 1] = 1.0
        return inputs, targets, mask

    def paragraph_tokens(self, sequences: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
        """Pad id sequences for the paragraph encoder; empty ones become ``<empty>``."""
        return code_tokens([list(s)[: self.max_len] for s in sequences], self.empty)

