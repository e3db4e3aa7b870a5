"""Paragraph generators with draft and polish phases."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..config import ModelConfig
from ..data import EVENT_KINDS
from ..errors import DimensionError, ParameterError, PreconditionError
from ..numerics import tensor as T
from ..numerics.layers import (
    NEG_INF,
    DecoderLayer,
    Embedding,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    TransformerEncoder,
    causal_bias,
    masked_mean,
)
from ..numerics.tensor import Tensor, no_grad
from .batch import WordCodec

ROLES = ("h", "e_s", "e_d", "e_m", "y_s", "y_d", "y_m")

# Condition vectors of each generator, keyed by the event kind its paragraph describes.
DRAFT_PROMPTS = {
    "symptom": ("h", "e_s"),
    "diagnosis": ("h", "e_s", "e_d"),
    "medication": ("h", "e_s", "e_d", "e_m"),
}
POLISH_PROMPTS = {
    "symptom": ("h", "y_d", "y_m"),
    "diagnosis": ("h", "y_s", "y_m"),
    "medication": ("h", "y_s", "y_d"),
}


@dataclass
class PromptSet:
    """Ordered named condition vectors, each (N, d) or (d,)."""

    names: tuple[str, ...]
    vectors: tuple[Tensor, ...]

    def __post_init__(self):
        self.names = tuple(self.names)
        self.vectors = tuple(T.as_tensor(v) for v in self.vectors)
        if not self.names:
            raise PreconditionError("a prompt set needs at least one vector")
        if len(set(self.names)) != len(self.names):
            raise PreconditionError(f"duplicate prompt names {self.names}")
        if len(self.names) != len(self.vectors):
            raise DimensionError("prompt names and vectors differ in count")
        unknown = set(self.names) - set(ROLES)
        if unknown:
            raise PreconditionError(f"unknown prompt names {sorted(unknown)}")

    @classmethod
    def select(cls, names: Sequence[str], available: Mapping[str, Tensor]) -> "PromptSet":
        return cls(tuple(names), tuple(available[n] for n in names))

    def __len__(self) -> int:
        return len(self.names)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    n, l, d = x.shape
    return x.reshape(n, l, heads, d // heads).transpose(0, 2, 1, 3)


class ParagraphDecoder(Module):
    """Causal transformer decoder with cross-attention over prompt vectors."""

    def __init__(self, dim: int, heads: int, layers: int, ffn: int, vocab: int, rng: np.random.Generator):
        self.layers = [DecoderLayer(dim, heads, ffn, rng) for _ in range(layers)]
        self.norm = LayerNorm(dim)
        self.out = Linear(dim, vocab, rng)

    def __call__(self, x: Tensor, memory: Tensor) -> Tensor:
        bias = causal_bias(x.shape[1], x.data.dtype)
        for layer in self.layers:
            x = layer(x, memory, bias)
        return self.out(self.norm(x))

    # -- cached single-token steps, no autodiff --------------------------------------

    def start(self, memory: Tensor) -> dict:
        """Precompute cross-attention keys and values for every layer."""
        cache = {"self": [None] * len(self.layers), "cross": []}
        for layer in self.layers:
            att = layer.cross_attn
            cache["cross"].append((_split_heads(att.k(memory).data, att.heads),
                                   _split_heads(att.v(memory).data, att.heads)))
        return cache

    def step(self, x: Tensor, cache: dict) -> np.ndarray:
        """Logits for one new position ``x`` (N, 1, d); extends ``cache`` in place."""
        for i, layer in enumerate(self.layers):
            att = layer.self_attn
            h = layer.ln1(x)
            k_new = _split_heads(att.k(h).data, att.heads)
            v_new = _split_heads(att.v(h).data, att.heads)
            prev = cache["self"][i]
            if prev is not None:
                k_new = np.concatenate([prev[0], k_new], axis=2)
                v_new = np.concatenate([prev[1], v_new], axis=2)
            cache["self"][i] = (k_new, v_new)
            x = x + _cached_attention(att, h, k_new, v_new)
            x = x + _cached_attention(layer.cross_attn, layer.ln2(x), *cache["cross"][i])
            x = x + layer.ffn(layer.ln3(x))
        return self.out(self.norm(x)).data[:, -1]


def _cached_attention(att: MultiHeadAttention, query: Tensor, k: np.ndarray, v: np.ndarray) -> Tensor:
    n, lq, _ = query.shape
    q = _split_heads(att.q(query).data, att.heads)
    scores = (q @ np.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(att.dim // att.heads))
    scores = scores - scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=-1, keepdims=True)
    ctx = (w @ v).transpose(0, 2, 1, 3).reshape(n, lq, att.dim)
    return att.o(Tensor(ctx))


class ReportGenerator(Module):
    def __init__(self, codec: WordCodec, cfg: ModelConfig, rng: np.random.Generator):
        d, dh = cfg.hidden_dim, cfg.latent_dim
        n_words = len(codec)
        self.cfg = cfg
        self.codec = codec
        self.word_embed = Embedding(n_words, d, rng)
        self.positions = Embedding(cfg.max_report_len + 1, d, rng, scale=0.1)
        self.roles = Embedding(len(ROLES), d, rng, scale=0.1)
        self.h_proj = Linear(dh, d, rng) if dh != d else None
        ffn = cfg.ffn_multiplier * d
        self.generators = {k: ParagraphDecoder(d, cfg.attention_heads, cfg.decoder_layers, ffn, n_words, rng)
                           for k in EVENT_KINDS}
        self.paragraph_encoder = TransformerEncoder(d, cfg.attention_heads, cfg.encoder_layers, ffn, rng)

    def encoder_parameters(self) -> list[Tensor]:
        return self.paragraph_encoder.parameters()

    def embed_tokens(self, ids: np.ndarray, offset: int = 0) -> Tensor:
        pos = np.minimum(np.arange(offset, offset + ids.shape[1]), self.cfg.max_report_len)
        return self.word_embed(ids) + self.positions(pos)

    def memory(self, prompts: PromptSet) -> Tensor:
        """Prompt vectors plus role embeddings, (N, P, d)."""
        rows = []
        for name, vec in zip(prompts.names, prompts.vectors):
            if name == "h" and self.h_proj is not None:
                vec = self.h_proj(vec)
            if vec.shape[-1] != self.cfg.hidden_dim:
                raise DimensionError(f"prompt {name!r} has length {vec.shape[-1]}, expected {self.cfg.hidden_dim}")
            if vec.ndim == 1:
                vec = vec.reshape(1, -1)
            rows.append(vec + self.roles(np.array(ROLES.index(name))))
        return T.stack(rows, axis=1)

    def lm_loss(self, kind: str, prompts: PromptSet, paragraphs: Sequence[Sequence[str]]) -> Tensor:
        """Teacher-forced token NLL summed over positions, one value per paragraph."""
        inputs, targets, mask = self.codec.teacher_forcing(paragraphs)
        logits = self.generators[kind](self.embed_tokens(inputs), self.memory(prompts))
        return T.sequence_nll(logits, targets, mask)

    def decode(self, kind: str, prompts: PromptSet, max_len: int | None = None, mode: str = "greedy",
               rng: np.random.Generator | None = None, temperature: float = 1.0) -> list[list[int]]:
        max_len = self.cfg.max_report_len if max_len is None else max_len
        if max_len < 1:
            raise ParameterError("max_len must be at least 1")
        if mode not in ("greedy", "sample"):
            raise ParameterError(f"unknown decode mode {mode!r}")
        if mode == "sample" and rng is None:
            raise ParameterError("sample mode needs a seed")
        max_len = min(max_len, self.cfg.max_report_len)
        codec = self.codec
        banned = [codec.pad, codec.bos, codec.unk, codec.empty]
        gen = self.generators[kind]
        with no_grad():
            memory = self.memory(prompts)
            n = memory.shape[0]
            cache = gen.start(memory)
            token = np.full((n, 1), codec.bos, dtype=np.int64)
            out = [[] for _ in range(n)]
            alive = np.ones(n, dtype=bool)
            for step in range(max_len):
                logits = gen.step(self.embed_tokens(token, offset=step), cache).astype(np.float64)
                logits[:, banned] = NEG_INF
                if mode == "greedy":
                    nxt = logits.argmax(axis=1)
                else:
                    nxt = _sample_rows(logits / temperature, rng)
                for i in np.flatnonzero(alive):
                    if nxt[i] == codec.eos:
                        alive[i] = False
                    else:
                        out[i].append(int(nxt[i]))
                if not alive.any():
                    break
                token = nxt.reshape(n, 1)
        return out

    def encode(self, sequences: Sequence[Sequence[int]]) -> Tensor:
        """Paragraph encodings (N, d); an empty paragraph encodes the <empty> token."""
        ids, mask = self.codec.paragraph_tokens(sequences)
        return masked_mean(self.paragraph_encoder(self.embed_tokens(ids), mask), mask)


def _sample_rows(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    u = rng.random(len(p))[:, None]
    return np.minimum((np.cumsum(p, axis=1) < u).sum(axis=1), p.shape[1] - 1)


# -- functional entry points ---------------------------------------------------------

def decode_paragraph(model: ReportGenerator, kind: str, prompts: PromptSet, max_len: int | None = None,
                     mode: str = "greedy", seed: int | None = None, temperature: float = 1.0):
    """Decode one paragraph per prompt row. Returns token id lists without <eos>."""
    rng = np.random.default_rng(seed) if mode == "sample" else None
    return model.decode(kind, prompts, max_len, mode, rng, temperature)


def _prompt_inputs(h, e_s, e_d, e_m) -> dict[str, Tensor]:
    return {"h": T.as_tensor(h), "e_s": T.as_tensor(e_s), "e_d": T.as_tensor(e_d), "e_m": T.as_tensor(e_m)}


def draft_reports(model: ReportGenerator, h, e_s, e_d, e_m, mode: str = "greedy",
                  rng: np.random.Generator | None = None) -> dict[str, list[list[int]]]:
    """ỹ_s from (h, ẽ_s), ỹ_d from (h, ẽ_s, ẽ_d), ỹ_m from (h, ẽ_s, ẽ_d, ẽ_m)."""
    available = _prompt_inputs(h, e_s, e_d, e_m)
    return {k: model.decode(k, PromptSet.select(DRAFT_PROMPTS[k], available), mode=mode, rng=rng)
            for k in EVENT_KINDS}


def encode_paragraph(model: ReportGenerator, tokens) -> Tensor:
    """Encoding of one id sequence, (d,), or of a list of sequences, (N, d)."""
    if len(tokens) and not isinstance(tokens[0], (int, np.integer)):
        return model.encode(tokens)
    return model.encode([list(tokens)])[0]


def draft_encodings(model: ReportGenerator, drafts: Mapping[str, Sequence[Sequence[int]]]) -> dict[str, Tensor]:
    return {"y_s": model.encode(drafts["symptom"]), "y_d": model.encode(drafts["diagnosis"]),
            "y_m": model.encode(drafts["medication"])}


def polish_reports(model: ReportGenerator, h, y_s, y_d, y_m, mode: str = "greedy",
                   rng: np.random.Generator | None = None) -> dict[str, list[list[int]]]:
    """Each paragraph is rewritten from h and the encodings of the other two drafts."""
    available = {"h": T.as_tensor(h), "y_s": T.as_tensor(y_s), "y_d": T.as_tensor(y_d), "y_m": T.as_tensor(y_m)}
    return {k: model.decode(k, PromptSet.select(POLISH_PROMPTS[k], available), mode=mode, rng=rng)
            for k in EVENT_KINDS}
