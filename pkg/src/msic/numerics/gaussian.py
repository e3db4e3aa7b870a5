"""Diagonal-Gaussian helpers for the latent health state."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from . import tensor as T
from .tensor import Tensor

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0


@dataclass
class GaussianParams:
    """Mean and log-variance of a diagonal Gaussian.

    Both fields may carry leading batch axes; the last axis is the latent
    dimension. ``log_variance`` is clamped to [-10, 10] on construction.
    """

    mean: Tensor
    log_variance: Tensor

    def __post_init__(self):
        self.mean = T.as_tensor(self.mean)
        self.log_variance = T.clip(T.as_tensor(self.log_variance), LOG_VAR_MIN, LOG_VAR_MAX)
        if self.mean.shape != self.log_variance.shape:
            raise DimensionError(
                f"mean {self.mean.shape} and log_variance {self.log_variance.shape} differ"
            )

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @classmethod
    def standard(cls, dim: int) -> "GaussianParams":
        return cls(Tensor(np.zeros(dim)), Tensor(np.zeros(dim)))


def reparameterize(params: GaussianParams, noise) -> Tensor:
    """mean + exp(log_variance / 2) * noise."""
    noise = T.as_tensor(noise)
    if noise.shape[-1:] != params.mean.shape[-1:]:
        raise DimensionError(f"noise length {noise.shape} does not match latent dim {params.dim}")
    return params.mean + T.exp(params.log_variance * 0.5) * noise


def kl_diag_gaussian(q: GaussianParams, p: GaussianParams) -> Tensor:
    """KL(q || p) summed over the last axis."""
    if q.mean.shape[-1] != p.mean.shape[-1]:
        raise DimensionError(f"KL between dims {q.dim} and {p.dim}")
    diff = q.mean - p.mean
    ratio = T.exp(q.log_variance - p.log_variance)
    inv_var_p = T.exp(-p.log_variance)
    terms = p.log_variance - q.log_variance + ratio + T.square(diff) * inv_var_p - 1.0
    return terms.sum(axis=-1) * 0.5
