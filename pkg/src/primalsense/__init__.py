"""Primal-sense ranking: order an expression's senses so the primal one comes first."""

from .corpus import (
    CorpusSplit,
    Expression,
    Sense,
    SynthSpec,
    Vocab,
    assign_weak_labels,
    build_vocab,
    corpus_stats,
    encode_text,
    generate_synthetic,
    load_corpus,
    load_split,
)
from .evalkit import EvalReport, evaluate, mean_average_precision, mean_rank, precision_at_1
from .fusion import FusionConfig, HybridRanker, lambda_from_R, rank_transform
from .scorers import PatternDetector, RelationGraphScorer, SenseScores, SkipThoughtScorer, UmfsWeScorer

__version__ = "0.1.0"

__all__ = [
    "CorpusSplit",
    "EvalReport",
    "Expression",
    "FusionConfig",
    "HybridRanker",
    "PatternDetector",
    "RelationGraphScorer",
    "Sense",
    "SenseScores",
    "SkipThoughtScorer",
    "SynthSpec",
    "UmfsWeScorer",
    "Vocab",
    "assign_weak_labels",
    "build_vocab",
    "corpus_stats",
    "encode_text",
    "evaluate",
    "generate_synthetic",
    "lambda_from_R",
    "load_corpus",
    "load_split",
    "mean_average_precision",
    "mean_rank",
    "precision_at_1",
    "rank_transform",
]
