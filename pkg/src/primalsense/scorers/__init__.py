from .base import SenseScores, cosine_scores, ordinal_ranks
from .listwise import ListwiseScorer, PatternDetector, RelationGraphScorer
from .skipthought import SkipThoughtScorer, document_triples, sentence_triples
from .umfs import UmfsWeScorer

SCORERS = {
    "umfs": UmfsWeScorer,
    "skipthought": SkipThoughtScorer,
    "pattern": PatternDetector,
    "relgraph": RelationGraphScorer,
}

__all__ = [
    "SCORERS",
    "SenseScores",
    "ListwiseScorer",
    "PatternDetector",
    "RelationGraphScorer",
    "SkipThoughtScorer",
    "UmfsWeScorer",
    "cosine_scores",
    "document_triples",
    "ordinal_ranks",
    "sentence_triples",
]
