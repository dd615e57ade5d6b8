"""P@1, MAP and mean rank, with banded breakdowns and model-overlap counts.

Every evaluated expression has exactly one relevant (gold) sense, so
average precision reduces to the reciprocal of the gold sense's rank.

``rankings`` arguments accept :class:`SenseScores`, :class:`TransformedScores`
or plain rank vectors (``ranks[i]`` is the rank of sense ``i``, 1 = best).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Expression


class EvalError(ValueError):
    pass


def _ranks_of(item) -> Sequence[int]:
    return item.ranks if hasattr(item, "ranks") else item


def _gold_of(g) -> int:
    idx = g.gold_index if isinstance(g, Expression) else g
    if idx is None:
        raise EvalError("missing gold label")
    return int(idx)


def gold_ranks(rankings: Sequence, golds: Sequence) -> np.ndarray:
    if len(rankings) != len(golds):
        raise EvalError(f"{len(rankings)} rankings but {len(golds)} gold labels")
    if not rankings:
        raise EvalError("nothing to evaluate")
    return np.array([int(_ranks_of(r)[_gold_of(g)]) for r, g in zip(rankings, golds)], dtype=np.int64)


def precision_at_1(rankings: Sequence, golds: Sequence) -> float:
    return float(np.mean(gold_ranks(rankings, golds) == 1))


def mean_average_precision(rankings: Sequence, golds: Sequence) -> float:
    return float(np.mean(1.0 / gold_ranks(rankings, golds)))


def mean_rank(rankings: Sequence, golds: Sequence) -> float:
    return float(np.mean(gold_ranks(rankings, golds)))


# -- banding ----------------------------------------------------------------------

@dataclass(frozen=True)
class Banding:
    """Band edges; a value ``x`` falls in band ``k`` when ``edges[k] <= x < edges[k+1]``.

    ``length_edges=None`` means description-length deciles of the evaluated
    corpus. The last sense band is open-ended (``7+``).
    """

    sense_edges: tuple[float, ...] = (2, 3, 4, 5, 6, 7, np.inf)
    length_edges: tuple[float, ...] | None = None
    tf_edges: tuple[float, ...] = (0, 10, 100, 1_000, 10_000, 100_000, np.inf)

    def validate(self) -> None:
        for name in ("sense_edges", "length_edges", "tf_edges"):
            edges = getattr(self, name)
            if edges is None:
                continue
            if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
                raise EvalError(f"{name} must be strictly increasing with at least two edges")


def _band_label(lo: float, hi: float) -> str:
    fmt = lambda x: str(int(x)) if float(x).is_integer() else f"{x:.4g}"  # noqa: E731
    if np.isinf(hi):
        return f"{fmt(lo)}+"
    return f"[{fmt(lo)},{fmt(hi)})"


def _assign(values: np.ndarray, edges: Sequence[float]) -> list[str | None]:
    edges = np.asarray(edges, dtype=np.float64)
    k = np.searchsorted(edges, values, side="right") - 1
    out = []
    for v, i in zip(values, k):
        out.append(_band_label(edges[i], edges[i + 1]) if 0 <= i < len(edges) - 1 else None)
    return out


def _length_deciles(lengths: np.ndarray) -> tuple[float, ...]:
    qs = np.unique(np.quantile(lengths, np.linspace(0, 1, 11)[:-1]))
    return tuple(float(q) for q in qs) + (np.inf,)


def bucket_report(rankings: Sequence, golds: Sequence, exprs: Sequence[Expression],
                  banding: Banding | None = None) -> dict[str, dict[str, dict]]:
    """P@1 and population per band for sense count, description length and term frequency.

    Empty bands are omitted; term-frequency bands only cover expressions
    that carry a ``term_frequency``.
    """
    banding = banding or Banding()
    banding.validate()
    correct = gold_ranks(rankings, golds) == 1
    if len(exprs) != len(correct):
        raise EvalError("expressions and rankings differ in length")
    m = np.array([e.m for e in exprs], dtype=np.float64)
    lengths = np.array([np.mean([len(s.description) for s in e.senses]) for e in exprs])
    length_edges = banding.length_edges or _length_deciles(lengths)
    keys = {
        "senses": _assign(m, banding.sense_edges),
        "length": _assign(lengths, length_edges),
    }
    tf_idx = [k for k, e in enumerate(exprs) if e.term_frequency is not None]
    tf_keys: list[str | None] = [None] * len(exprs)
    if tf_idx:
        tf_vals = np.array([exprs[k].term_frequency for k in tf_idx], dtype=np.float64)
        for k, key in zip(tf_idx, _assign(tf_vals, banding.tf_edges)):
            tf_keys[k] = key
    keys["term_frequency"] = tf_keys

    report: dict[str, dict[str, dict]] = {}
    for dim, labels in keys.items():
        bands: dict[str, list[bool]] = {}
        for label, ok in zip(labels, correct):
            if label is not None:
                bands.setdefault(label, []).append(bool(ok))
        if bands:
            report[dim] = {label: {"population": len(v), "p_at_1": float(np.mean(v))}
                           for label, v in bands.items()}
    return report


# -- reports -----------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    model: str
    p_at_1: float
    map: float
    mean_rank: float
    n_expressions: int
    buckets: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        return cls(**d)


def evaluate(model: str, rankings: Sequence, exprs: Sequence[Expression],
             banding: Banding | None = None) -> EvalReport:
    golds = [e.gold_index for e in exprs]
    return EvalReport(
        model=model,
        p_at_1=precision_at_1(rankings, golds),
        map=mean_average_precision(rankings, golds),
        mean_rank=mean_rank(rankings, golds),
        n_expressions=len(exprs),
        buckets=bucket_report(rankings, golds, exprs, banding),
    )


def format_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text comparison with columns P@1, MAP, Mean Rank."""
    width = max([len("Model")] + [len(r.model) for r in reports])
    lines = [f"{'Model':<{width}}  {'P@1':>6}  {'MAP':>6}  {'Mean Rank':>9}"]
    for r in reports:
        lines.append(f"{r.model:<{width}}  {100 * r.p_at_1:6.1f}  {100 * r.map:6.1f}  {r.mean_rank:9.3f}")
    return "\n".join(lines)


# -- overlap ---------------------------------------------------------------------

@dataclass(frozen=True)
class OverlapReport:
    models: tuple[str, ...]
    correct: dict[str, frozenset[int]]
    regions: dict[str, int]
    n_expressions: int

    @property
    def fractions(self) -> dict[str, float]:
        return {k: v / self.n_expressions for k, v in self.regions.items()}

    def to_dict(self) -> dict:
        return {"models": list(self.models), "n_expressions": self.n_expressions,
                "correct_counts": {m: len(s) for m, s in self.correct.items()},
                "regions": self.regions, "fractions": self.fractions}


def region_key(members: Sequence[str]) -> str:
    return "&".join(members) if members else "none"


def overlap_report(per_model: Mapping[str, Sequence], golds: Sequence) -> OverlapReport:
    """Counts for all ``2**k`` correct/incorrect combinations of ``k`` models.

    Region ``"a&b"`` holds expressions that exactly models ``a`` and ``b``
    got right; ``"none"`` those no model got right.
    """
    names = tuple(per_model)
    if len(names) < 2:
        raise EvalError("overlap needs at least two models")
    sizes = {len(v) for v in per_model.values()}
    if sizes != {len(golds)}:
        raise EvalError("models were evaluated on different expression sets")
    ids = {n: [getattr(r, "expression_id", None) for r in per_model[n]] for n in names}
    ref = ids[names[0]]
    if any(ids[n] != ref for n in names[1:]):
        raise EvalError("models were evaluated on different expression sets")
    hits = {n: gold_ranks(per_model[n], golds) == 1 for n in names}
    correct = {n: frozenset(np.flatnonzero(hits[n]).tolist()) for n in names}
    regions = {}
    for pattern in itertools.product((True, False), repeat=len(names)):
        members = [n for n, on in zip(names, pattern) if on]
        mask = np.ones(len(golds), dtype=bool)
        for n, on in zip(names, pattern):
            mask &= hits[n] if on else ~hits[n]
        regions[region_key(members)] = int(mask.sum())
    return OverlapReport(names, correct, regions, len(golds))
