"""Adam with bias correction and a step-decay learning-rate schedule."""

from __future__ import annotations

import numpy as np


def adam_step(params: dict, grads: dict, moments: dict, t: int, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place Adam update of ``params``.

    ``moments`` maps each parameter name to its ``(m, v)`` pair and is
    filled lazily with zeros.  ``t`` is the 1-based step count.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, g in grads.items():
        p = params[name]
        if name not in moments:
            moments[name] = (np.zeros_like(p), np.zeros_like(p))
        m, v = moments[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(p.dtype, copy=False)


def step_decay_lr(epoch: int, lr0: float, every: int, factor: float) -> float:
    """``lr0 / factor ** (epoch // every)`` for a 0-based epoch index."""
    return lr0 / factor ** (epoch // every)
