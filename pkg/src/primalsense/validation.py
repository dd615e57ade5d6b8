"""Input checks shared by the estimators (the analogue of ``check_array``)."""

from __future__ import annotations

from typing import Iterable

from .corpus import CorpusError, Expression


def check_expressions(X: Iterable[Expression], *, require_gold: bool = False,
                      allow_empty: bool = False, name: str = "X") -> list[Expression]:
    exprs = list(X)
    if not exprs and not allow_empty:
        raise ValueError(f"{name}: no expressions")
    for e in exprs:
        if not isinstance(e, Expression):
            raise TypeError(f"{name}: expected Expression, got {type(e).__name__}")
        if e.m < 2:
            raise CorpusError(f"{name}: expression {e.id!r} has fewer than 2 senses")
        if require_gold and e.gold_index is None:
            raise CorpusError(f"{name}: expression {e.id!r} has no gold label")
    return exprs


def target_index(e: Expression) -> int:
    """Gold sense when annotated, otherwise the weak (first-listed) one."""
    g = e.gold_index
    return e.weak_label_index if g is None else g
