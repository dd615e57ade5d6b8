from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def ordinal_ranks(scores) -> np.ndarray:
    """Ranks 1..m by descending score; ties go to the lower sense index."""
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="stable")
    ranks = np.empty(len(s), dtype=np.int64)
    ranks[order] = np.arange(1, len(s) + 1)
    return ranks


@dataclass(frozen=True)
class SenseScores:
    expression_id: str
    model: str
    scores: tuple[float, ...]
    ranks: tuple[int, ...] = field(default=())
    zero_norm: tuple[int, ...] = ()

    def __post_init__(self):
        scores = tuple(float(x) for x in self.scores)
        if not all(np.isfinite(scores)):
            raise ValueError(f"{self.model}/{self.expression_id}: non-finite score")
        object.__setattr__(self, "scores", scores)
        ranks = tuple(int(r) for r in ordinal_ranks(scores))
        if self.ranks and tuple(self.ranks) != ranks:
            raise ValueError(f"{self.model}/{self.expression_id}: ranks inconsistent with scores")
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "zero_norm", tuple(int(i) for i in self.zero_norm))

    @property
    def m(self) -> int:
        return len(self.scores)

    @property
    def top(self) -> int:
        return self.ranks.index(1)

    def ranking(self) -> list[int]:
        """Sense indices from best to worst."""
        return sorted(range(self.m), key=lambda i: self.ranks[i])

    def to_record(self) -> dict:
        rec = {"expr_id": self.expression_id, "model": self.model,
               "scores": list(self.scores), "ranks": list(self.ranks)}
        if self.zero_norm:
            rec["zero_norm"] = list(self.zero_norm)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "SenseScores":
        return cls(expression_id=rec["expr_id"], model=rec["model"], scores=tuple(rec["scores"]),
                   ranks=tuple(rec.get("ranks", ())), zero_norm=tuple(rec.get("zero_norm", ())))


def cosine_scores(vectors: np.ndarray, key: np.ndarray, eps: float = 1e-12) -> tuple[np.ndarray, list[int]]:
    """Cosine of each row with ``key``; zero-norm rows (or key) score 0 and are flagged."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    key = np.asarray(key, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    knorm = float(np.linalg.norm(key))
    out = np.zeros(len(vectors))
    flagged = []
    for i, n in enumerate(norms):
        if n < eps or knorm < eps:
            flagged.append(i)
            continue
        out[i] = np.clip(vectors[i] @ key / (n * knorm), -1.0, 1.0)
    return out, flagged


def gold_ranks(scores: Sequence[SenseScores], golds: Sequence[int]) -> np.ndarray:
    return np.array([s.ranks[g] for s, g in zip(scores, golds, strict=True)], dtype=np.int64)
