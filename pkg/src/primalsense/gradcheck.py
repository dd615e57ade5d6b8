"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import ndgrad
from .ndgrad import Tensor


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_param: str | None
    n_coords: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from blowing up."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def _value(f: Callable[[], Tensor]) -> float:
    with ndgrad.no_grad():
        out = f()
    val = float(np.asarray(out.data if isinstance(out, Tensor) else out).reshape(()))
    if not np.isfinite(val):
        raise FloatingPointError("grad_check: objective is not finite")
    return val


def grad_check(f: Callable[[], Tensor], params: Mapping[str, Tensor], step: float = 1e-5,
               tol: float = 1e-4, max_coords: int | None = None,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar ``f()`` against central differences.

    ``f`` must be deterministic (no dropout) and read the parameters' current
    ``.data``. With ``max_coords`` set, a random subset of coordinates per
    parameter is probed.
    """
    for p in params.values():
        p.grad = None
    loss = f()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("grad_check: objective is not finite")
    if loss.requires_grad:
        ndgrad.backward(loss)
    worst, worst_name, n = 0.0, None, 0
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = (rng or np.random.default_rng(0)).choice(flat.size, max_coords, replace=False)
        numeric = np.empty(coords.size)
        for k, i in enumerate(coords):
            orig = flat[i]
            flat[i] = orig + step
            up = _value(f)
            flat[i] = orig - step
            down = _value(f)
            flat[i] = orig
            numeric[k] = (up - down) / (2.0 * step)
        err = relative_error(analytic.reshape(-1)[coords], numeric)
        n += coords.size
        if err.size and err.max() > worst:
            worst, worst_name = float(err.max()), name
        p.grad = None
    return GradCheckReport(max_rel_error=worst, worst_param=worst_name, n_coords=n, tol=tol)
