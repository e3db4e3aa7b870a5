"""The full model: state inference, event decoders and report generators."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..config import ModelConfig
from ..data import EVENT_KINDS, Corpus, Vocabulary
from ..errors import ValidationError
from ..numerics.layers import Module
from .batch import WordCodec
from .events import EventDecoders
from .reports import ReportGenerator
from .state import StateInference


@dataclass
class CorpusStats:
    """Training-set statistics used to bootstrap de-novo records.

    ``first_counts[k][n]`` counts first visits holding ``n`` codes of kind
    ``k``; ``first_codes[k][i]`` counts first visits holding code ``i``;
    ``visit_counts[n]`` counts patients with ``n`` visits.
    """

    first_counts: dict[str, np.ndarray] = field(default_factory=dict)
    first_codes: dict[str, np.ndarray] = field(default_factory=dict)
    visit_counts: np.ndarray = field(default_factory=lambda: np.zeros(1))

    @classmethod
    def of(cls, corpus: Corpus, max_visits: int) -> "CorpusStats":
        sizes = corpus.sizes
        out = cls()
        for k in EVENT_KINDS:
            counts = np.zeros(sizes[k] + 1, dtype=np.float32)
            codes = np.zeros(sizes[k], dtype=np.float32)
            for r in corpus.records:
                idx = r.visits[0].events(k).indices
                counts[len(idx)] += 1
                codes[list(idx)] += 1
            out.first_counts[k] = counts
            out.first_codes[k] = codes
        visits = np.zeros(max_visits + 1, dtype=np.float32)
        for r in corpus.records:
            visits[min(len(r), max_visits)] += 1
        out.visit_counts = visits
        return out

    def named_arrays(self) -> dict[str, np.ndarray]:
        arrays = {"stats.visit_counts": self.visit_counts}
        for k in EVENT_KINDS:
            arrays[f"stats.first_counts.{k}"] = self.first_counts[k]
            arrays[f"stats.first_codes.{k}"] = self.first_codes[k]
        return arrays

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "CorpusStats":
        return cls({k: arrays[f"stats.first_counts.{k}"] for k in EVENT_KINDS},
                   {k: arrays[f"stats.first_codes.{k}"] for k in EVENT_KINDS},
                   arrays["stats.visit_counts"])


class MSIC(Module):
    def __init__(self, vocabularies: Mapping[str, Vocabulary], cfg: ModelConfig, seed: int = 0):
        for k in EVENT_KINDS:
            if k not in vocabularies:
                raise ValidationError(f"missing {k} vocabulary")
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.vocabularies = dict(vocabularies)
        self.sizes = {k: len(vocabularies[k]) for k in EVENT_KINDS}
        self.state = StateInference(self.sizes, cfg, rng)
        self.events = EventDecoders(self.sizes, cfg, rng)
        word = vocabularies.get("word")
        self.codec = WordCodec(word, cfg.max_report_len) if word is not None else None
        self.reports = ReportGenerator(self.codec, cfg, rng) if word is not None else None
        self.stats: CorpusStats | None = None

    def report_parameters(self) -> list:
        return self.reports.parameters() if self.reports is not None else []
