"""UMFS-WE baseline: cosine between mean character embeddings.

Character embeddings come from a skip-gram pass with negative sampling
over the training text. A sense scores ``cos(mean_emb(description),
mean_emb(surface))``.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .. import checkpoint
from ..corpus import Expression, Vocab, build_vocab, encode_text
from ..validation import check_expressions
from .base import SenseScores, cosine_scores


def skipgram_pairs(sequences: Iterable[np.ndarray], window: int) -> np.ndarray:
    """All (center, context) id pairs within ``window`` positions."""
    pairs = []
    for seq in sequences:
        n = len(seq)
        for off in range(1, window + 1):
            if n > off:
                pairs.append(np.stack([seq[:-off], seq[off:]], axis=1))
                pairs.append(np.stack([seq[off:], seq[:-off]], axis=1))
    return np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)


def _log_sigmoid_grad(x: np.ndarray) -> np.ndarray:
    # d/dx log(sigmoid(x)) = 1 - sigmoid(x)
    return 0.5 * (1.0 - np.tanh(0.5 * x))


class UmfsWeScorer(BaseEstimator):
    model_name = "umfs"

    def __init__(self, embedding_dim: int = 32, window: int = 2, negative: int = 5, epochs: int = 5,
                 lr: float = 0.025, batch_size: int = 256, max_len: int = 200, min_count: int = 1,
                 random_state: int = 0):
        self.embedding_dim = embedding_dim
        self.window = window
        self.negative = negative
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.max_len = max_len
        self.min_count = min_count
        self.random_state = random_state

    def fit(self, X: Sequence[Expression], y=None, extra_text: Iterable[str] = ()):
        exprs = check_expressions(X)
        rng = np.random.default_rng(self.random_state)
        self.vocab_ = build_vocab(exprs, self.min_count)
        texts = [s.description for e in exprs for s in e.senses] + list(extra_text)
        seqs = [encode_text(self.vocab_, t, self.max_len) for t in texts if t]
        pairs = skipgram_pairs(seqs, self.window)
        V, d = len(self.vocab_), self.embedding_dim

        counts = np.bincount(np.concatenate(seqs), minlength=V).astype(np.float64)
        noise = counts ** 0.75
        noise /= noise.sum()
        W_in = (rng.random((V, d)) - 0.5) / d
        W_out = np.zeros((V, d))
        total_steps = max(1, self.epochs * int(np.ceil(len(pairs) / self.batch_size)))
        step = 0
        for _ in range(self.epochs):
            order = rng.permutation(len(pairs))
            for lo in range(0, len(order), self.batch_size):
                lr = self.lr * max(1e-4, 1.0 - step / total_steps)
                step += 1
                batch = pairs[order[lo: lo + self.batch_size]]
                center, ctx = batch[:, 0], batch[:, 1]
                negs = rng.choice(V, size=(len(batch), self.negative), p=noise)
                targets = np.concatenate([ctx[:, None], negs], axis=1)
                labels = np.zeros(targets.shape)
                labels[:, 0] = 1.0
                v = W_in[center]
                u = W_out[targets]
                dots = np.einsum("bd,bkd->bk", v, u)
                # gradient ascent on log sigma(+dot) for context, log sigma(-dot) for negatives
                g = np.where(labels == 1.0, _log_sigmoid_grad(dots), -_log_sigmoid_grad(-dots))
                grad_v = np.einsum("bk,bkd->bd", g, u)
                grad_u = g[:, :, None] * v[:, None, :]
                np.add.at(W_in, center, lr * grad_v)
                np.add.at(W_out, targets, lr * grad_u)
        self.embeddings_ = W_in
        return self

    def _mean_embedding(self, text: str) -> np.ndarray:
        ids = encode_text(self.vocab_, text, self.max_len)
        if ids.size == 0:
            return np.zeros(self.embedding_dim)
        return self.embeddings_[ids].mean(axis=0)

    def score_senses(self, X: Sequence[Expression]) -> list[SenseScores]:
        check_is_fitted(self, "embeddings_")
        out = []
        for e in check_expressions(X, allow_empty=True):
            vecs = np.stack([self._mean_embedding(d) for d in e.descriptions])
            scores, flagged = cosine_scores(vecs, self._mean_embedding(e.surface))
            out.append(SenseScores(e.id, self.model_name, tuple(scores), zero_norm=tuple(flagged)))
        return out

    def predict(self, X: Sequence[Expression]) -> np.ndarray:
        return np.array([s.top for s in self.score_senses(X)], dtype=np.int64)

    def save(self, path, extra_meta: dict | None = None) -> None:
        check_is_fitted(self, "embeddings_")
        meta = {"model": self.model_name, "estimator": type(self).__name__,
                "hyperparameters": self.get_params(), "vocab": self.vocab_.to_dict(), **(extra_meta or {})}
        checkpoint.save(path, {"embedding": self.embeddings_}, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = checkpoint.load(path)
        if meta.get("estimator") != cls.__name__:
            raise checkpoint.CheckpointError(f"checkpoint holds {meta.get('estimator')}, not {cls.__name__}")
        est = cls(**meta["hyperparameters"])
        est.vocab_ = Vocab.from_dict(meta["vocab"])
        est.embeddings_ = arrays["embedding"]
        return est
