"""Neural building blocks on top of :mod:`msic.numerics.tensor`."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import DimensionError, PreconditionError
from . import tensor as T
from .tensor import Tensor

NEG_INF = -1e9


class Module:
    """Container that discovers parameters from its attributes.

    Attribute insertion order fixes parameter order, which in turn fixes the
    checkpoint tensor table and optimizer state layout.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
            elif isinstance(value, dict):
                for k, item in value.items():
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{k}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _param(array: np.ndarray) -> Tensor:
    return Tensor(array.astype(T.get_dtype()), requires_grad=True)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.n_in, self.n_out = n_in, n_out
        self.weight = _param(rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out)))
        self.bias = _param(np.zeros(n_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise DimensionError(f"Linear expects last dim {self.n_in}, got {x.shape[-1]}")
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class Embedding(Module):
    def __init__(self, n: int, dim: int, rng: np.random.Generator, scale: float = 0.5):
        self.table = _param(rng.normal(0.0, scale, size=(n, dim)))

    def __call__(self, index) -> Tensor:
        return T.embedding(self.table, index)


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gamma = _param(np.ones(dim))
        self.beta = _param(np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta)


class MLP(Module):
    """Two affine maps with a GELU in between."""

    def __init__(self, n_in: int, hidden: int, n_out: int, rng: np.random.Generator):
        self.fc1 = Linear(n_in, hidden, rng)
        self.fc2 = Linear(hidden, n_out, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


class MultiHeadAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise DimensionError(f"dim {dim} not divisible by {heads} heads")
        self.dim, self.heads = dim, heads
        self.q = Linear(dim, dim, rng)
        # No key bias: it shifts every score of a query equally and cancels in softmax.
        self.k = Linear(dim, dim, rng, bias=False)
        self.v = Linear(dim, dim, rng)
        self.o = Linear(dim, dim, rng)

    def _split(self, x: Tensor) -> Tensor:
        b, l, _ = x.shape
        return T.transpose(x.reshape(b, l, self.heads, self.dim // self.heads), (0, 2, 1, 3))

    def __call__(self, query: Tensor, memory: Tensor, bias: np.ndarray | None = None) -> Tensor:
        """``bias`` is an additive mask broadcastable to (B, H, Lq, Lk)."""
        b, lq, _ = query.shape
        q = self._split(self.q(query))
        k = self._split(self.k(memory))
        v = self._split(self.v(memory))
        scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(self.dim // self.heads))
        if bias is not None:
            scores = scores + bias
        ctx = T.matmul(T.softmax(scores, axis=-1), v)
        ctx = T.transpose(ctx, (0, 2, 1, 3)).reshape(b, lq, self.dim)
        return self.o(ctx)


class EncoderLayer(Module):
    def __init__(self, dim: int, heads: int, ffn: int, rng: np.random.Generator):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.ffn = MLP(dim, ffn, dim, rng)

    def __call__(self, x: Tensor, bias: np.ndarray | None) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, bias)
        return x + self.ffn(self.ln2(x))


class TransformerEncoder(Module):
    """Pre-norm encoder stack without positional information."""

    def __init__(self, dim: int, heads: int, layers: int, ffn: int, rng: np.random.Generator):
        self.layers = [EncoderLayer(dim, heads, ffn, rng) for _ in range(layers)]
        self.norm = LayerNorm(dim)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        """``mask`` is (B, L) with 1 for real positions."""
        bias = key_padding_bias(mask, x.data.dtype)
        for layer in self.layers:
            x = layer(x, bias)
        return self.norm(x)


class DecoderLayer(Module):
    def __init__(self, dim: int, heads: int, ffn: int, rng: np.random.Generator):
        self.ln1 = LayerNorm(dim)
        self.self_attn = MultiHeadAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, heads, rng)
        self.ln3 = LayerNorm(dim)
        self.ffn = MLP(dim, ffn, dim, rng)

    def __call__(self, x: Tensor, memory: Tensor, self_bias: np.ndarray) -> Tensor:
        h = self.ln1(x)
        x = x + self.self_attn(h, h, self_bias)
        x = x + self.cross_attn(self.ln2(x), memory)
        return x + self.ffn(self.ln3(x))


def key_padding_bias(mask: np.ndarray, dtype=np.float32) -> np.ndarray:
    """(B, L) keep-mask -> (B, 1, 1, L) additive bias."""
    return np.where(mask[:, None, None, :] > 0, 0.0, NEG_INF).astype(dtype)


def causal_bias(length: int, dtype=np.float32) -> np.ndarray:
    upper = np.triu(np.ones((length, length), dtype=bool), k=1)
    return np.where(upper, NEG_INF, 0.0).astype(dtype)


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over axis 1 of (B, L, D) using a (B, L) keep-mask."""
    m = mask.astype(x.data.dtype)
    counts = np.maximum(m.sum(axis=1, keepdims=True), 1.0)
    return (x * m[:, :, None]).sum(axis=1) * (1.0 / counts)


class AttentionPool(Module):
    """Single-head scaled dot-product attention over a visit history.

    The most recent element is the query. Learned visit-index position
    embeddings are added to the query and key inputs only, so values are a
    pure linear map of the history vectors. Position 0 is reserved for an
    optional prefix element (the initial-history slot); visit ``t`` uses
    position ``t``.
    """

    def __init__(self, dim: int, max_positions: int, rng: np.random.Generator):
        self.dim = dim
        self.max_positions = max_positions
        self.w_q = _param(rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, dim)))
        self.w_k = _param(rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, dim)))
        self.w_v = _param(rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, dim)))
        self.pos = _param(rng.normal(0.0, 0.1, size=(max_positions, dim)))

    def _positions(self, start: int, n: int) -> np.ndarray:
        return np.minimum(np.arange(start, start + n), self.max_positions - 1)

    def causal(self, seq: Tensor, prefix: Tensor | None = None, window: int | None = None) -> Tensor:
        """Attend at every step ``t`` over elements ``1..t`` (plus the prefix).

        ``seq`` is (B, T, D). ``window=1`` restricts each step to itself and
        the prefix, which removes cross-visit links.
        """
        if seq.ndim != 3 or seq.shape[-1] != self.dim:
            raise DimensionError(f"AttentionPool expects (B, T, {self.dim}), got {seq.shape}")
        b, t, d = seq.shape
        if t == 0:
            raise PreconditionError("attention over an empty history")
        pos_q = T.embedding(self.pos, self._positions(1, t))
        q = T.matmul(seq + pos_q, self.w_q)
        if prefix is not None:
            keys_in = T.concat([T.broadcast_to(prefix.reshape(1, 1, d), (b, 1, d)), seq], axis=1)
            pos_k = T.embedding(self.pos, self._positions(0, t + 1))
            offset = 1
        else:
            keys_in = seq
            pos_k = pos_q
            offset = 0
        k = T.matmul(keys_in + pos_k, self.w_k)
        v = T.matmul(keys_in, self.w_v)
        scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(d))
        scores = scores + self._bias(t, offset, window, seq.data.dtype)
        return T.matmul(T.softmax(scores, axis=-1), v)

    @staticmethod
    def _bias(t: int, offset: int, window: int | None, dtype) -> np.ndarray:
        qi = np.arange(t)[:, None] + offset
        kj = np.arange(t + offset)[None, :]
        allowed = kj <= qi
        if window is not None:
            allowed &= (kj > qi - window) | (kj < offset)
        return np.where(allowed, 0.0, NEG_INF).astype(dtype)

    def pool(self, history: Tensor, prefix: Tensor | None = None) -> Tensor:
        """Return the attended vector for the last element of ``history`` (T, D)."""
        if history.ndim != 2 or history.shape[0] == 0:
            raise PreconditionError("history must be a non-empty (T, D) sequence")
        out = self.causal(history.reshape(1, *history.shape), prefix)
        return out[0, -1]


def attention_pool(layer: AttentionPool, history) -> Tensor:
    """Functional form: pool a list of equal-length vectors or a (T, D) tensor."""
    if isinstance(history, Tensor):
        return layer.pool(history)
    if len(history) == 0:
        raise PreconditionError("attention over an empty history")
    vecs = [T.as_tensor(h) for h in history]
    if len({v.shape for v in vecs}) != 1:
        raise DimensionError("history vectors differ in length")
    return layer.pool(T.stack(vecs, axis=0))
