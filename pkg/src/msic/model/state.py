"""Event encoders with history attention, prior/posterior heads and the health-state chain."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..config import ModelConfig
from ..data import EVENT_KINDS
from ..errors import DimensionError, PreconditionError, ValidationError
from ..numerics import tensor as T
from ..numerics.gaussian import GaussianParams, reparameterize
from ..numerics.layers import MLP, AttentionPool, Embedding, Linear, Module, TransformerEncoder, masked_mean
from ..numerics.tensor import Tensor
from .batch import VisitBatch, code_tokens


@dataclass
class Contextual:
    """Contextual event representations ẽ for a flat list of visits, each (N, d)."""

    symptom: Tensor
    diagnosis: Tensor
    medication: Tensor | None = None


@dataclass
class StateOutputs:
    encodings: Contextual
    prior: GaussianParams | None
    posterior: GaussianParams | None
    z: Tensor | None
    h: Tensor       # h_t for each visit, (N, d_h)
    h_prev: Tensor  # h_{t-1}, with the learned h_0 at t = 1
    mode: str


class StateInference(Module):
    def __init__(self, sizes: Mapping[str, int], cfg: ModelConfig, rng: np.random.Generator):
        d, dh = cfg.hidden_dim, cfg.latent_dim
        self.cfg = cfg
        self.sizes = dict(sizes)
        # the extra last row of each table is the learned <empty> embedding
        self.code_embed = {k: Embedding(sizes[k] + 1, d, rng) for k in EVENT_KINDS}
        self.encoders = {k: TransformerEncoder(d, cfg.attention_heads, cfg.encoder_layers,
                                               cfg.ffn_multiplier * d, rng) for k in EVENT_KINDS}
        n_pos = cfg.max_visits + 1
        if cfg.share_history_attention:
            shared = AttentionPool(d, n_pos, rng)
            self.history = {k: shared for k in EVENT_KINDS}
        else:
            self.history = {k: AttentionPool(d, n_pos, rng) for k in EVENT_KINDS}
        self.initial_history = Embedding(len(EVENT_KINDS), d, rng, scale=0.1)
        self.g_d = MLP(2 * d, d, d, rng)
        self.g_m = MLP(3 * d, d, d, rng)
        self.prior_mean = Linear(2 * d, dh, rng)
        self.prior_log_variance = Linear(2 * d, dh, rng)
        self.posterior_mean = Linear(3 * d, dh, rng)
        self.posterior_log_variance = Linear(3 * d, dh, rng)
        self.state_pool = AttentionPool(dh, n_pos, rng)
        self.h0 = Embedding(1, dh, rng, scale=0.1)

    def named_parameters(self, prefix: str = ""):
        seen = set()
        for name, p in super().named_parameters(prefix):
            if id(p) not in seen:  # a shared history pool appears under every kind
                seen.add(id(p))
                yield name, p

    @property
    def window(self) -> int | None:
        return None if self.cfg.multi_visit else 1

    def initial_state(self) -> Tensor:
        return self.h0(np.array(0))

    # -- per-visit pieces --------------------------------------------------------

    def encode_events(self, kind: str, sets: Sequence[Sequence[int]]) -> Tensor:
        """Raw visit encodings e_k, (N, d)."""
        n = self.sizes[kind]
        for s in sets:
            if len(s) and (min(s) < 0 or max(s) >= n):
                raise ValidationError(f"{kind} index out of range for vocabulary of size {n}")
        # canonical order makes the set encoding exactly permutation invariant
        ids, mask = code_tokens([sorted(s) for s in sets], empty_id=n)
        x = self.code_embed[kind](ids)
        return masked_mean(self.encoders[kind](x, mask), mask)

    def attend_history(self, kind: str, seq: Tensor) -> Tensor:
        """g_attn over e_k for visits 1..t at every t: (B, T, d) -> (B, T, d)."""
        prefix = None
        if self.cfg.use_initial_history:
            prefix = self.initial_history(np.array(EVENT_KINDS.index(kind)))
        return self.history[kind].causal(seq, prefix, self.window)

    def combine(self, a_s: Tensor, a_d: Tensor, a_m: Tensor | None = None) -> Contextual:
        e_s = a_s
        e_d = self.g_d(T.concat([a_d, e_s], axis=-1))
        e_m = None if a_m is None else self.g_m(T.concat([a_m, e_s, e_d], axis=-1))
        return Contextual(e_s, e_d, e_m)

    def prior(self, e_s: Tensor, e_d: Tensor) -> GaussianParams:
        x = T.concat([e_s, e_d], axis=-1)
        return GaussianParams(self.prior_mean(x), self.prior_log_variance(x))

    def posterior(self, e_s: Tensor, e_d: Tensor, e_m: Tensor) -> GaussianParams:
        x = T.concat([e_s, e_d, e_m], axis=-1)
        return GaussianParams(self.posterior_mean(x), self.posterior_log_variance(x))

    def compose(self, z_seq: Tensor) -> Tensor:
        """f_attn over z_1..z_t at every t: (B, T, d_h) -> (B, T, d_h)."""
        prefix = self.initial_state() if self.cfg.use_initial_history else None
        return self.state_pool.causal(z_seq, prefix, self.window)

    # -- whole batches ---------------------------------------------------------------

    def forward(self, batch: VisitBatch, mode: str = "posterior",
                rng: np.random.Generator | None = None) -> StateOutputs:
        """Run the encoders and the state chain over every visit of ``batch``.

        ``mode`` picks z_t: ``posterior`` samples (training), ``posterior_mean``
        uses the posterior mean, ``prior`` samples the prior (synthesis).
        """
        if mode not in ("posterior", "posterior_mean", "prior"):
            raise ValueError(f"unknown state mode {mode!r}")
        use_m = mode != "prior"
        contextual = {}
        for kind in EVENT_KINDS:
            if kind == "medication" and not use_m:
                continue
            flat = self.encode_events(kind, batch.events[kind])
            contextual[kind] = unpad(self.attend_history(kind, pad(flat, batch)), batch)
        enc = self.combine(contextual["symptom"], contextual["diagnosis"], contextual.get("medication"))
        n, dh = batch.n_visits, self.cfg.latent_dim
        if not self.cfg.use_state:
            zeros = Tensor(np.zeros((n, dh), dtype=T.get_dtype()))
            return StateOutputs(enc, None, None, None, zeros, zeros, mode)
        prior = self.prior(enc.symptom, enc.diagnosis)
        posterior = self.posterior(enc.symptom, enc.diagnosis, enc.medication) if use_m else None
        source = prior if mode == "prior" else posterior
        if mode == "posterior_mean":
            z = source.mean
        else:
            if rng is None:
                raise PreconditionError("sampling z requires a random generator")
            z = reparameterize(source, rng.standard_normal((n, dh)).astype(T.get_dtype()))
        h_seq = self.compose(pad(z, batch))
        h = unpad(h_seq, batch)
        h_prev = unpad(shift_in(h_seq, self.initial_state()), batch)
        return StateOutputs(enc, prior, posterior, z, h, h_prev, mode)


def pad(flat: Tensor, batch: VisitBatch) -> Tensor:
    """(N, D) flat visits -> (B, T, D) with zero rows past each patient's end."""
    zero = Tensor(np.zeros((1, flat.shape[-1]), dtype=flat.data.dtype))
    return T.getitem(T.concat([flat, zero], axis=0), batch.flat_index)


def unpad(seq: Tensor, batch: VisitBatch) -> Tensor:
    return T.getitem(seq, batch.rows)


def shift_in(seq: Tensor, first: Tensor) -> Tensor:
    """Prepend ``first`` along the time axis and drop the last step."""
    b, _, d = seq.shape
    head = T.broadcast_to(first.reshape(1, 1, d), (b, 1, d))
    return T.concat([head, seq[:, :-1]], axis=1)


# -- functional entry points ---------------------------------------------------------

def encode_visit_history(model: StateInference, visits) -> Contextual:
    """ẽ_s, ẽ_d, ẽ_m at the last visit of ``visits`` (a sequence of Visit)."""
    visits = list(visits)
    if not visits:
        raise PreconditionError("encode_visit_history needs at least one visit")
    a = {}
    for kind in EVENT_KINDS:
        flat = model.encode_events(kind, [v.events(kind).indices for v in visits])
        a[kind] = model.attend_history(kind, flat.reshape(1, len(visits), -1))[0, -1:]
    out = model.combine(a["symptom"], a["diagnosis"], a["medication"])
    return Contextual(out.symptom[0], out.diagnosis[0], out.medication[0])


def _check(vec: Tensor, n: int, what: str) -> None:
    if vec.shape[-1] != n:
        raise DimensionError(f"{what} has length {vec.shape[-1]}, expected {n}")


def prior_params(model: StateInference, e_s, e_d) -> GaussianParams:
    e_s, e_d = T.as_tensor(e_s), T.as_tensor(e_d)
    for v, name in ((e_s, "ẽ_s"), (e_d, "ẽ_d")):
        _check(v, model.cfg.hidden_dim, name)
    return model.prior(e_s, e_d)


def posterior_params(model: StateInference, e_s, e_d, e_m) -> GaussianParams:
    e_s, e_d, e_m = T.as_tensor(e_s), T.as_tensor(e_d), T.as_tensor(e_m)
    for v, name in ((e_s, "ẽ_s"), (e_d, "ẽ_d"), (e_m, "ẽ_m")):
        _check(v, model.cfg.hidden_dim, name)
    return model.posterior(e_s, e_d, e_m)


def compose_health_state(model: StateInference, zs) -> Tensor:
    """h_t from z_1..z_t."""
    zs = list(zs) if not isinstance(zs, Tensor) else zs
    if len(zs) == 0:
        raise PreconditionError("compose_health_state needs at least one latent sample")
    seq = zs if isinstance(zs, Tensor) else T.stack([T.as_tensor(z) for z in zs], axis=0)
    _check(seq, model.cfg.latent_dim, "z")
    return model.compose(seq.reshape(1, *seq.shape))[0, -1]
