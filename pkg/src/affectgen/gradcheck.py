"""Central finite-difference verification of autograd gradients.

Used by the test suite to certify every differentiable component at 64-bit
precision. The checked loss closure must rebuild its graph on each call so
parameter perturbations take effect.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import torch

DEFAULT_STEP = 1e-5


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    """|a - b| / max(|a|, |b|), falling back to the absolute difference when
    both values sit below the floor."""
    scale = max(abs(a), abs(b))
    diff = abs(a - b)
    return diff / scale if scale > floor else diff


def max_gradient_error(loss_fn: Callable[[], torch.Tensor],
                       params: Sequence[torch.Tensor],
                       step: float = DEFAULT_STEP,
                       entries_per_tensor: int = 6,
                       rng: np.random.Generator | None = None) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Samples up to ``entries_per_tensor`` coordinates of each parameter
    (all of them for small tensors). Parameters must be float64 leaves with
    ``requires_grad`` set.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        if p.dtype != torch.float64:
            raise ValueError("gradient checks require float64 parameters")
        if not p.requires_grad:
            raise ValueError("parameter does not require grad")

    loss = loss_fn()
    grads = torch.autograd.grad(loss, params)

    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, grads):
            flat = p.reshape(-1)
            n = flat.numel()
            if n <= entries_per_tensor:
                idx = np.arange(n)
            else:
                idx = rng.choice(n, size=entries_per_tensor, replace=False)
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + step
                up = loss_fn().item()
                flat[i] = orig - step
                down = loss_fn().item()
                flat[i] = orig
                fd = (up - down) / (2.0 * step)
                worst = max(worst, relative_error(g.reshape(-1)[i].item(), fd))
    return worst
