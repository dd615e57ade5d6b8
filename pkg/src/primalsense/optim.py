"""Adam with bias-corrected moments and optional global-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .ndgrad import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def clip_global_norm(params: Mapping[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    total = float(np.sqrt(sum(float(np.vdot(p.grad, p.grad)) for p in params.values())))
    if total > max_norm > 0:
        scale = max_norm / total
        for p in params.values():
            p.grad *= scale
    return total


def adam_step(state: AdamState, params: Mapping[str, Tensor], clip_norm: float | None = 5.0) -> None:
    """Update ``params`` in place from their ``.grad`` and clear the gradients."""
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {name!r} has no gradient")
    if clip_norm is not None:
        clip_global_norm(params, clip_norm)
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.grad = None


class Adam:
    """Thin holder pairing an :class:`AdamState` with a parameter dict."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, clip_norm: float | None = 5.0):
        self.params = dict(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)
        self.clip_norm = clip_norm

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        # parameters that did not take part in this loss get a zero gradient
        for p in self.params.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
        adam_step(self.state, self.params, self.clip_norm)
