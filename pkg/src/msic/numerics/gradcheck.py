"""Finite-difference oracle for reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NumericError
from . import tensor as T
from .tensor import Tensor


def check_gradients(function: Callable, point, step: float = 1e-6, *,
                    coords: int | None = None, seed: int = 0, floor: float = 1e-6,
                    points: int = 3) -> float:
    """Max relative error between autodiff and central differences.

    ``point`` is either an array (``function`` receives a Tensor built from
    it) or a sequence of parameter Tensors (``function`` takes no arguments
    and reads them). The function runs in float64; build parameter tensors
    under ``precision(np.float64)`` for a full 64-bit check. ``coords``
    limits the check to that many randomly chosen coordinates.
    The per-coordinate error is ``|a - f| / max(|a|, |f|, floor)``.
    ``points=5`` uses the fourth-order central stencil, which tolerates a
    larger ``step`` on deep graphs where rounding swamps the 3-point rule.
    """
    if points not in (3, 5):
        raise ValueError("points must be 3 or 5")
    stencil = ((1, 0.5), (-1, -0.5)) if points == 3 else \
        ((2, -1 / 12), (1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12))
    if isinstance(point, (list, tuple)) and point and isinstance(point[0], Tensor):
        params = list(point)
        fn = function
    else:
        x = Tensor(np.array(point, dtype=np.float64), requires_grad=True)
        x.data = x.data.astype(np.float64)
        params = [x]
        fn = lambda: function(x)  # noqa: E731

    def call():
        with T.precision(np.float64):
            return fn()

    for p in params:
        p.grad = None
    out = call()
    _require_finite(out.data, "function value")
    out.backward()
    analytic = [np.zeros_like(p.data, dtype=np.float64) if p.grad is None
                else p.grad.astype(np.float64) for p in params]
    for a in analytic:
        _require_finite(a, "gradient")

    slots = [(i, j) for i, p in enumerate(params) for j in range(p.data.size)]
    if coords is not None and coords < len(slots):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(slots), size=coords, replace=False)
        slots = [slots[k] for k in sorted(pick)]

    worst = 0.0
    with T.no_grad():
        for i, j in slots:
            flat = params[i].data.reshape(-1)
            orig = flat[j].copy()
            fd = 0.0
            for offset, weight in stencil:
                flat[j] = orig + offset * step
                fd += weight * np.float64(call().data.sum())
            flat[j] = orig
            fd /= step
            _require_finite(np.asarray(fd), "finite difference")
            ad = analytic[i].reshape(-1)[j]
            denom = max(abs(ad), abs(fd), floor)
            worst = max(worst, abs(ad - fd) / denom)
    return worst


def _require_finite(arr, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite {what}")
