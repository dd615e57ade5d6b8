"""Rank-based score fusion.

Each model's raw scores are replaced by a distribution over its ranks,
``score_i = exp(-lambda r_i) / sum_j exp(-lambda r_j)`` with
``lambda = ln(R / (R - 1))`` and ``R`` the model's mean gold rank on the
development set. That distribution is the maximum-entropy one whose
expected rank is ``R`` (up to a small tail term that vanishes as the number
of senses grows). The hybrid total is the sum of transformed scores weighted
by each model's development P@1.

The exact maximum-entropy multiplier and the dropped tail term are
available too (:func:`solve_exact_lambda`, :func:`approximation_residual`)
so the closed form can be checked numerically.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import Expression
from .scorers.base import SenseScores, ordinal_ranks

HYBRID_MODELS = ("pattern", "relgraph", "skipthought")
DEGENERATE_EPS = 1e-6


class FusionError(ValueError):
    pass


# -- mean rank and lambda --------------------------------------------------------------

def mean_rank_R(scores: Sequence[SenseScores], golds: Sequence[int]) -> float:
    """Mean rank of the gold sense under one model."""
    if not scores:
        raise FusionError("mean_rank_R: no scored expressions")
    if len(scores) != len(golds):
        raise FusionError("mean_rank_R: scores and golds differ in length")
    if any(g is None for g in golds):
        raise FusionError("mean_rank_R: every expression needs a gold label")
    return float(np.mean([s.ranks[g] for s, g in zip(scores, golds)]))


def lambda_from_R(R: float, eps: float = DEGENERATE_EPS) -> float:
    """``ln(R / (R - 1))``; ``inf`` (one-hot transform) when ``R <= 1 + eps``."""
    if not np.isfinite(R) or R < 1.0:
        raise FusionError(f"mean rank must be >= 1, got {R}")
    if R <= 1.0 + eps:
        return math.inf
    return math.log(R / (R - 1.0))


def rank_transform(raw, lam: float) -> np.ndarray:
    """Softmax of ``-lam * rank``; ``lam = inf`` puts all mass on rank 1.

    ``raw`` is a :class:`SenseScores` or an array of raw scores (ranked with
    ties broken by ascending index).
    """
    ranks = np.asarray(raw.ranks if isinstance(raw, SenseScores) else ordinal_ranks(raw), dtype=np.float64)
    if math.isinf(lam):
        return (ranks == 1).astype(np.float64)
    if lam <= 0:
        raise FusionError(f"lambda must be positive, got {lam}")
    z = np.exp(-lam * (ranks - 1.0))
    return z / z.sum()


# -- configuration -------------------------------------------------------------------

@dataclass(frozen=True)
class ModelWeight:
    R: float
    lam: float
    p: float

    @property
    def degenerate(self) -> bool:
        return math.isinf(self.lam)

    def to_dict(self) -> dict:
        return {"R": self.R, "lambda": None if self.degenerate else self.lam, "p": self.p,
                "degenerate": self.degenerate}


@dataclass(frozen=True)
class FusionConfig:
    models: dict[str, ModelWeight] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({name: w.to_dict() for name, w in sorted(self.models.items())},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FusionConfig":
        raw = json.loads(text)
        models = {}
        for name, d in raw.items():
            lam = math.inf if d.get("degenerate") or d.get("lambda") is None else float(d["lambda"])
            models[name] = ModelWeight(R=float(d["R"]), lam=lam, p=float(d["p"]))
        return cls(models)


def fit_fusion_config(dev_scores: Mapping[str, Sequence[SenseScores]], dev: Sequence[Expression],
                      models: Sequence[str] = HYBRID_MODELS) -> FusionConfig:
    """R, lambda and P@1 weight per model from gold-labelled development scores."""
    golds = [e.gold_index for e in dev]
    if any(g is None for g in golds):
        raise FusionError("development expressions need gold labels")
    ids = [e.id for e in dev]
    out = {}
    for name in models:
        if name not in dev_scores:
            raise FusionError(f"no development scores for model {name!r}")
        scores = _aligned(dev_scores[name], ids, name)
        R = mean_rank_R(scores, golds)
        p = float(np.mean([s.ranks[g] == 1 for s, g in zip(scores, golds)]))
        out[name] = ModelWeight(R=R, lam=lambda_from_R(R), p=p)
    return FusionConfig(out)


def _aligned(scores: Sequence[SenseScores], ids: Sequence[str], name: str) -> list[SenseScores]:
    by_id = {s.expression_id: s for s in scores}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise FusionError(f"model {name!r} has no scores for {missing[:5]}")
    return [by_id[i] for i in ids]


# -- combination --------------------------------------------------------------------

@dataclass(frozen=True)
class TransformedScores:
    expression_id: str
    per_model: dict[str, tuple[float, ...]]
    total: tuple[float, ...]

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(int(r) for r in ordinal_ranks(self.total))

    def ranking(self) -> list[int]:
        r = self.ranks
        return sorted(range(len(r)), key=lambda i: r[i])

    def to_record(self) -> dict:
        return {"expr_id": self.expression_id,
                "per_model": {k: list(v) for k, v in sorted(self.per_model.items())},
                "total": list(self.total), "ranking": self.ranking()}


def hybrid_combine(transformed: Mapping[str, np.ndarray], config: FusionConfig,
                   expression_id: str = "") -> TransformedScores:
    """``total_i = sum_k p_k * score_k[i]`` over the configured models (weights not renormalised)."""
    if set(transformed) != set(config.models):
        raise FusionError(f"model set mismatch: {sorted(transformed)} vs {sorted(config.models)}")
    sizes = {len(v) for v in transformed.values()}
    if len(sizes) != 1:
        raise FusionError("transformed vectors differ in length")
    total = np.zeros(sizes.pop())
    for name, vec in transformed.items():
        total += config.models[name].p * np.asarray(vec, dtype=np.float64)
    return TransformedScores(expression_id, {k: tuple(map(float, v)) for k, v in transformed.items()},
                             tuple(map(float, total)))


class HybridRanker(BaseEstimator):
    """Fit fusion weights on development scores, then fuse per-model scores."""

    model_name = "hybrid"

    def __init__(self, models: Sequence[str] = HYBRID_MODELS):
        self.models = models

    def fit(self, dev_scores: Mapping[str, Sequence[SenseScores]], dev: Sequence[Expression]):
        self.config_ = fit_fusion_config(dev_scores, dev, tuple(self.models))
        return self

    def transform(self, scores: Mapping[str, Sequence[SenseScores]]) -> list[TransformedScores]:
        check_is_fitted(self, "config_")
        names = list(self.config_.models)
        ids = [s.expression_id for s in scores[names[0]]]
        aligned = {n: _aligned(scores[n], ids, n) for n in names}
        out = []
        for k, eid in enumerate(ids):
            vecs = {n: rank_transform(aligned[n][k], self.config_.models[n].lam) for n in names}
            out.append(hybrid_combine(vecs, self.config_, eid))
        return out

    def score_senses(self, scores: Mapping[str, Sequence[SenseScores]]) -> list[SenseScores]:
        return [SenseScores(t.expression_id, self.model_name, t.total) for t in self.transform(scores)]


# -- maximum-entropy machinery ----------------------------------------------------------

def maxent_distribution(n: int, lam: float) -> np.ndarray:
    """``C exp(-lam i)`` for ranks ``i = 1..n``, normalised."""
    i = np.arange(1, n + 1, dtype=np.float64)
    if lam >= 0:
        z = np.exp(-lam * (i - 1.0))
    else:
        z = np.exp(-lam * (i - n))
    return z / z.sum()


def expected_rank(n: int, lam: float) -> float:
    return float(np.arange(1, n + 1) @ maxent_distribution(n, lam))


def solve_exact_lambda(n: int, R: float, tol: float = 1e-10, max_iter: int = 500) -> float:
    """Multiplier whose max-entropy distribution over ranks 1..n has mean rank ``R``.

    Solves ``R sum_i exp(-lam i) = sum_i i exp(-lam i)`` by bisection. The
    expected rank falls monotonically from ``(n + 1) / 2`` at ``lam = 0``
    towards 1, so ``1 < R <= (n + 1) / 2`` is required.
    """
    if n < 2:
        raise FusionError("need at least two ranks")
    upper = (n + 1) / 2.0
    if not 1.0 < R <= upper:
        raise FusionError(f"R={R} outside the feasible range (1, {upper}] for n={n}")
    if abs(R - upper) <= tol:
        return 0.0
    lo, hi = 0.0, 1.0
    while expected_rank(n, hi) > R:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise FusionError("failed to bracket lambda")
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gap = expected_rank(n, mid) - R
        if abs(gap) < tol or hi - lo < 1e-15:
            break
        if gap > 0:
            lo = mid
        else:
            hi = mid
    return mid


def maxent_oracle(n: int, R: float) -> np.ndarray:
    """Maximum-entropy distribution over ranks 1..n with mean rank ``R``."""
    return maxent_distribution(n, solve_exact_lambda(n, R))


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def approximation_residual(n: int, lam: float) -> float:
    """Tail term dropped when approximating the multiplier by ``ln(R / (R - 1))``.

    ``n q^(n+1) (1 - q) / (q - q^(n+1))`` with ``q = exp(-lam)``.
    """
    if n < 2:
        raise FusionError("need at least two ranks")
    if lam <= 0:
        raise FusionError("lambda must be positive")
    if math.isinf(lam):
        return 0.0
    q = math.exp(-lam)
    return n * q ** (n + 1) * (1.0 - q) / (q - q ** (n + 1))
