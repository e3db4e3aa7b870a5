"""Tensor engine, layers, Gaussian utilities and the optimizer."""
from .gaussian import GaussianParams, kl_diag_gaussian, reparameterize
from .gradcheck import check_gradients
from .layers import (
    MLP,
    AttentionPool,
    DecoderLayer,
    Embedding,
    EncoderLayer,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    TransformerEncoder,
    attention_pool,
)
from .optim import Adam, AdamState, adam_step, clip_grad_norm, warmup_linear
from .tensor import Tensor, no_grad, precision

__all__ = [
    "Adam", "AdamState", "AttentionPool", "DecoderLayer", "Embedding", "EncoderLayer",
    "GaussianParams", "LayerNorm", "Linear", "MLP", "Module", "MultiHeadAttention", "Tensor",
    "TransformerEncoder", "adam_step", "attention_pool", "check_gradients", "clip_grad_norm",
    "kl_diag_gaussian", "no_grad", "precision", "reparameterize", "warmup_linear",
]
