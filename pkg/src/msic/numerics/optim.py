"""Adam with bias correction, global-norm clipping and a warm-up/decay schedule."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor


@dataclass
class AdamState:
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor | np.ndarray]) -> "AdamState":
        arrays = [p.data if isinstance(p, Tensor) else p for p in params]
        return cls(0, [np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, applied in place.

    ``grads`` entries may be ``None``; those parameters and their moments are
    left untouched. Returns ``(params, state)``.
    """
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} params but {len(grads)} grads")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(_arr(p)) for p in params]
        state.second_moment = [np.zeros_like(_arr(p)) for p in params]
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        a = _arr(p)
        if g.shape != a.shape or state.first_moment[i].shape != a.shape:
            raise DimensionError(f"param {i}: shape {a.shape} vs grad {g.shape}")
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        a -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(a.dtype)
    return params, state


def _arr(p) -> np.ndarray:
    return p.data if isinstance(p, Tensor) else p


def clip_grad_norm(grads: list[np.ndarray | None], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads if g is not None)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            if g is not None:
                g *= scale
    return total


def warmup_linear(step: int, total_steps: int, warmup_fraction: float, base_lr: float) -> float:
    """Linear warm-up to ``base_lr`` then linear decay to zero at ``total_steps``."""
    if total_steps <= 0:
        return base_lr
    warm = max(1, int(round(warmup_fraction * total_steps)))
    if step < warm:
        return base_lr * (step + 1) / warm
    remaining = max(1, total_steps - warm)
    return base_lr * max(0.0, (total_steps - step) / remaining)


class Adam:
    """Stateful convenience wrapper around :func:`adam_step`."""

    def __init__(self, params: Sequence[Tensor], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = AdamState.for_params(self.params)

    def step(self, frozen: set[int] | None = None) -> None:
        grads = [None if (frozen and id(p) in frozen) else p.grad for p in self.params]
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
