"""Seeded gradient-check instances for every layer type."""
from __future__ import annotations

import numpy as np

from msic.numerics import layers as L
from msic.numerics import tensor as T
from msic.numerics.tensor import Tensor


def _input(rng, *shape) -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _project(out: Tensor, rng) -> Tensor:
    # Random linear functional so that sum-invariant layers still get signal.
    w = rng.normal(size=out.shape)
    return (out * w).sum()


def linear(rng):
    layer = L.Linear(5, 3, rng)
    x = _input(rng, 4, 5)
    return lambda: _project(layer(x), rng_fixed(rng)), layer.parameters() + [x]


def embedding(rng):
    layer = L.Embedding(7, 4, rng)
    idx = rng.integers(0, 7, size=(3, 5))
    return lambda: _project(layer(idx), rng_fixed(rng)), layer.parameters()


def layer_norm(rng):
    layer = L.LayerNorm(6)
    layer.gamma.data += rng.normal(scale=0.1, size=6)
    x = _input(rng, 3, 6)
    return lambda: _project(layer(x), rng_fixed(rng)), layer.parameters() + [x]


def mlp(rng):
    layer = L.MLP(4, 8, 3, rng)
    x = _input(rng, 2, 4)
    return lambda: _project(layer(x), rng_fixed(rng)), layer.parameters() + [x]


def attention(rng):
    layer = L.MultiHeadAttention(8, 2, rng)
    q = _input(rng, 2, 3, 8)
    m = _input(rng, 2, 4, 8)
    bias = L.key_padding_bias(np.array([[1, 1, 1, 0], [1, 1, 0, 0]]), np.float64)
    return lambda: _project(layer(q, m, bias), rng_fixed(rng)), layer.parameters() + [q, m]


def encoder(rng):
    layer = L.TransformerEncoder(8, 2, 2, 16, rng)
    x = _input(rng, 2, 4, 8)
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]])
    return lambda: _project(layer(x, mask), rng_fixed(rng)), layer.parameters() + [x]


def decoder(rng):
    layer = L.DecoderLayer(8, 2, 16, rng)
    x = _input(rng, 2, 3, 8)
    mem = _input(rng, 2, 2, 8)
    bias = L.causal_bias(3, np.float64)
    return lambda: _project(layer(x, mem, bias), rng_fixed(rng)), layer.parameters() + [x, mem]


def attention_pool(rng):
    layer = L.AttentionPool(6, 5, rng)
    seq = _input(rng, 2, 4, 6)
    prefix = _input(rng, 6)
    return (lambda: _project(layer.causal(seq, prefix), rng_fixed(rng)),
            layer.parameters() + [seq, prefix])


def softmax_bce(rng):
    """embedding -> attention -> affine -> sigmoid -> BCE."""
    emb = L.Embedding(9, 6, rng)
    pool = L.AttentionPool(6, 4, rng)
    head = L.Linear(6, 5, rng)
    idx = rng.integers(0, 9, size=(1, 3))
    truth = (rng.random(5) < 0.5).astype(np.float64)

    def fn():
        h = pool.causal(emb(idx))[0, -1]
        p = T.clip(T.sigmoid(head(h)), 1e-7, 1 - 1e-7)
        return -(T.log(p) * truth + T.log(1.0 - p) * (1.0 - truth)).mean()

    return fn, emb.parameters() + pool.parameters() + head.parameters()


def sequence_nll(rng):
    logits = _input(rng, 2, 4, 6)
    targets = rng.integers(0, 6, size=(2, 4))
    mask = np.array([[1, 1, 1, 0], [1, 1, 1, 1]])
    return lambda: T.sequence_nll(logits, targets, mask).sum(), [logits]


def elementwise(rng):
    x = _input(rng, 3, 4)
    y = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)

    def fn():
        a = T.tanh(x) * T.gelu(x) + T.exp(x * 0.3) / y
        b = T.log(y) - T.log_softmax(x, axis=-1) + T.softmax(x, axis=0) * T.square(x)
        return (a + b + T.relu(x + 0.37)).sum()

    return fn, [x, y]


def gaussian_kl(rng):
    from msic.numerics.gaussian import GaussianParams, kl_diag_gaussian, reparameterize
    mq, lq, mp, lp = (_input(rng, 5) for _ in range(4))
    noise = rng.normal(size=5)

    def fn():
        q, p = GaussianParams(mq, lq), GaussianParams(mp, lp)
        return kl_diag_gaussian(q, p) + reparameterize(q, noise).sum()

    return fn, [mq, lq, mp, lp]


def visit_loss(rng):
    # Whole model, one small batch: event BCE, KL and both report phases.
    from msic.config import LossWeights, ModelConfig
    from msic.data import EVENT_KINDS
    from msic.model import DRAFT_PROMPTS, MSIC, PromptSet, VisitBatch
    from msic.planted import PlantedConfig, generate_planted_corpus
    from msic.training import batch_terms, training_vocabularies, visit_loss as compose

    seed = int(rng.integers(1 << 30))
    corpus = generate_planted_corpus(PlantedConfig(n_symptoms=5, n_diagnoses=6, n_medications=4, n_patients=2,
                                                   mean_visits=1.5, max_visits=3, n_syndromes=2, max_events=3,
                                                   max_report_len=12, rule_seed=seed), seed)
    cfg = ModelConfig(hidden_dim=8, latent_dim=6, attention_heads=2, ffn_multiplier=2, max_report_len=12)
    model = MSIC(training_vocabularies(corpus), cfg, seed=seed)
    batch = VisitBatch.from_records(corpus.records)
    # Greedy drafts carry no gradient; hold them fixed so the function is smooth.
    with T.no_grad():
        state = model.state.forward(batch, "posterior", np.random.default_rng(seed))
        avail = {"h": state.h, "e_s": state.encodings.symptom, "e_d": state.encodings.diagnosis,
                 "e_m": state.encodings.medication}
        drafts = {k: model.reports.decode(k, PromptSet.select(DRAFT_PROMPTS[k], avail)) for k in EVENT_KINDS}

    def fn():
        terms = batch_terms(model, batch, np.random.default_rng(seed), drafts=drafts).terms
        return compose(terms, LossWeights()).total

    return fn, [p for _, p in model.named_parameters()]


def rng_fixed(rng):
    # Same projection weights on every call of a given instance.
    if not hasattr(rng, "_proj_seed"):
        rng._proj_seed = int(rng.integers(1 << 30))
    return np.random.default_rng(rng._proj_seed)


class _Rng:
    """A Generator wrapper that can carry the projection seed attribute."""

    def __init__(self, seed):
        self._g = np.random.default_rng(seed)

    def __getattr__(self, name):
        return getattr(self._g, name)


CASES = {
    "linear": linear,
    "embedding": embedding,
    "layer_norm": layer_norm,
    "mlp": mlp,
    "multi_head_attention": attention,
    "transformer_encoder": encoder,
    "decoder_layer": decoder,
    "attention_pool": attention_pool,
    "composite_bce": softmax_bce,
    "sequence_nll": sequence_nll,
    "elementwise_ops": elementwise,
    "gaussian_kl": gaussian_kl,
    "visit_loss": visit_loss,
}


# Finite-difference settings per case; the deep composed loss needs the 5-point stencil.
CHECK_OPTIONS = {"visit_loss": {"step": 2e-3, "points": 5}}


def build(name: str, seed: int):
    """Return ``(fn, params)`` built in float64 for case ``name``."""
    with T.precision(np.float64):
        return CASES[name](_Rng(seed))
