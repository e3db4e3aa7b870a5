"""Event decoders f_θs, f_θd, f_θm and binary event sampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..config import ModelConfig
from ..data import EventSet
from ..errors import DimensionError, ParameterError
from ..numerics import tensor as T
from ..numerics.layers import MLP, Module
from ..numerics.tensor import Tensor


@dataclass(frozen=True)
class SamplingStrategy:
    name: str = "bernoulli"
    threshold: float = 0.5
    k: int = 5

    @classmethod
    def bernoulli(cls) -> "SamplingStrategy":
        return cls("bernoulli")

    @classmethod
    def thresholded(cls, tau: float) -> "SamplingStrategy":
        return cls("threshold", threshold=tau)

    @classmethod
    def top_k(cls, k: int) -> "SamplingStrategy":
        return cls("top_k", k=k)


class EventDecoders(Module):
    def __init__(self, sizes: Mapping[str, int], cfg: ModelConfig, rng: np.random.Generator):
        d, dh = cfg.hidden_dim, cfg.latent_dim
        self.f_s = MLP(dh, d, sizes["symptom"], rng)
        self.f_d = MLP(dh + d, d, sizes["diagnosis"], rng)
        self.f_m = MLP(dh + 2 * d, d, sizes["medication"], rng)

    def medications(self, h: Tensor, e_s: Tensor, e_d: Tensor) -> Tensor:
        return T.sigmoid(self.f_m(T.concat([h, e_s, e_d], axis=-1)))

    def next_symptoms(self, h: Tensor) -> Tensor:
        return T.sigmoid(self.f_s(h))

    def next_diagnoses(self, h: Tensor, e_s_next: Tensor) -> Tensor:
        return T.sigmoid(self.f_d(T.concat([h, e_s_next], axis=-1)))


def _tensor(x, n: int, what: str) -> Tensor:
    x = T.as_tensor(x)
    if x.shape[-1] != n:
        raise DimensionError(f"{what} has length {x.shape[-1]}, expected {n}")
    return x


def predict_medications(decoders: EventDecoders, h, e_s, e_d) -> Tensor:
    """m̂ = σ(f_θm(h ⊕ ẽ_s ⊕ ẽ_d))."""
    dh = decoders.f_s.fc1.n_in
    d = (decoders.f_m.fc1.n_in - dh) // 2
    return decoders.medications(_tensor(h, dh, "h"), _tensor(e_s, d, "ẽ_s"), _tensor(e_d, d, "ẽ_d"))


def predict_next_symptoms(decoders: EventDecoders, h) -> Tensor:
    return decoders.next_symptoms(_tensor(h, decoders.f_s.fc1.n_in, "h"))


def predict_next_diagnoses(decoders: EventDecoders, h, e_s_next) -> Tensor:
    dh = decoders.f_s.fc1.n_in
    return decoders.next_diagnoses(_tensor(h, dh, "h"),
                                   _tensor(e_s_next, decoders.f_d.fc1.n_in - dh, "ẽ_s"))


def sample_indices(probs: np.ndarray, strategy: SamplingStrategy,
                   rng: np.random.Generator | None) -> list[tuple[int, ...]]:
    """Binarize each row of an (N, V) probability matrix."""
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    n, v = p.shape
    if strategy.name == "bernoulli":
        if rng is None:
            raise ParameterError("bernoulli sampling needs a random generator")
        hits = rng.random((n, v)) < p
    elif strategy.name == "threshold":
        hits = p >= strategy.threshold
    elif strategy.name == "top_k":
        if strategy.k > v:
            raise ParameterError(f"top_k k={strategy.k} exceeds vocabulary size {v}")
        if strategy.k < 0:
            raise ParameterError("top_k needs k >= 0")
        hits = np.zeros((n, v), dtype=bool)
        # stable sort on -p keeps the lower index first among equal probabilities
        order = np.argsort(-p, axis=1, kind="stable")[:, : strategy.k]
        np.put_along_axis(hits, order, True, axis=1)
    else:
        raise ParameterError(f"unknown sampling strategy {strategy.name!r}")
    return [tuple(np.flatnonzero(row).tolist()) for row in hits]


def sample_event_set(probs, strategy: SamplingStrategy, seed: int | np.random.Generator | None = None,
                     kind: str = "symptom") -> EventSet:
    p = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    if p.ndim != 1:
        raise DimensionError("sample_event_set takes one probability vector")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return EventSet(kind, sample_indices(p, strategy, rng)[0])
