"""Skip-thought sentence encoder and the unsupervised cosine scorer built on it.

A unidirectional LSTM encodes the current sentence; two LSTM decoders,
started from the encoder's final state, reconstruct the previous and the
next sentence with teacher forcing. The pretraining loss is the sum of the
two decoders' per-character cross-entropies. A sense is scored by the
cosine between the encoder's final state on its description and the mean
input embedding of the expression's characters, so the embedding and
hidden sizes are equal.

The decoders' output layer is tied to the input embedding table and the
thought vector is added to every decoder state before that projection,
which keeps thought vectors in the same space as the character embeddings
(otherwise the cosine against an embedding average has arbitrary sign).
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .. import checkpoint
from .. import ndgrad as nd
from ..corpus import Expression, Vocab, encode_text
from ..encoder import LstmStack, expression_vector, pad_sequences, run_lstm, uniform_init
from ..ndgrad import Tensor
from ..optim import Adam
from ..validation import check_expressions
from .base import SenseScores, cosine_scores

logger = logging.getLogger(__name__)

Triple = tuple[str, str, str]


def document_triples(docs: Sequence[Sequence[str]]) -> list[Triple]:
    """(previous, current, next) sentence windows over running-text documents."""
    return [(d[k - 1], d[k], d[k + 1]) for d in docs for k in range(1, len(d) - 1)]


def sentence_triples(exprs: Sequence[Expression]) -> list[Triple]:
    """Triples over each expression's page: the surface, then descriptions in listed order.

    A fallback when no running text is available. On page text a sense's
    neighbours are the other senses, so this corpus tends to favour
    non-primal senses; prefer real running text.
    """
    return document_triples(
        [[e.surface] + [s.description for s in sorted(e.senses, key=lambda s: s.listed_position)]
         for e in exprs])


def _sentence_vocab(sentences) -> Vocab:
    counts: dict[str, int] = {}
    for s in sentences:
        for c in s:
            counts[c] = counts.get(c, 0) + 1
    if not counts:
        raise ValueError("skip-thought: corpus has no text")
    return Vocab(tuple(sorted(counts, key=lambda c: (-counts[c], c))))


class SkipThoughtScorer(BaseEstimator):
    model_name = "skipthought"

    def __init__(self, hidden_dim: int = 24, max_len: int = 200, batch_size: int = 16,
                 epochs: int = 5, lr: float = 3e-3, clip_norm: float | None = 5.0,
                 holdout: float = 0.1, tie_embeddings: bool = True, condition_output: bool = True,
                 random_state: int = 0, verbose: bool = False):
        self.hidden_dim = hidden_dim
        self.max_len = max_len
        self.batch_size = batch_size
        self.epochs = epochs
        self.lr = lr
        self.clip_norm = clip_norm
        self.holdout = holdout
        self.tie_embeddings = tie_embeddings
        self.condition_output = condition_output
        self.random_state = random_state
        self.verbose = verbose

    # -- model -----------------------------------------------------------------

    def _build(self, vocab: Vocab, rng: np.random.Generator) -> None:
        self.vocab_ = vocab
        H = self.hidden_dim
        # one extra symbol: sentence boundary (decoder start input and end target)
        self.n_symbols_ = len(vocab) + 1
        self.params_: dict[str, Tensor] = {"embedding": uniform_init(rng, (self.n_symbols_, H))}
        self.encoder_ = LstmStack(H, H, 1, bidirectional=False, rng=rng, prefix="enc")
        self.params_.update(self.encoder_.params)
        for side in ("prev", "next"):
            dec = LstmStack(H, H, 1, bidirectional=False, rng=rng, prefix=f"dec_{side}")
            self.params_.update(dec.params)
            if not self.tie_embeddings:
                self.params_[f"dec_{side}.W_o"] = uniform_init(rng, (H, self.n_symbols_))
            self.params_[f"dec_{side}.b_o"] = nd.parameter(np.zeros(self.n_symbols_))

    @property
    def boundary_(self) -> int:
        return self.n_symbols_ - 1

    def _ids(self, text: str) -> np.ndarray:
        return encode_text(self.vocab_, text, self.max_len)

    def _encode(self, sentences: Sequence[str]) -> Tensor:
        ids, mask = pad_sequences([self._ids(s) for s in sentences])
        x = nd.embedding_lookup(self.params_["embedding"], ids)
        _, last = self.encoder_.forward(x, mask)
        return last

    def _decoder_loss(self, side: str, h0: Tensor, targets: Sequence[str]) -> Tensor:
        b = self.boundary_
        seqs = [self._ids(t) for t in targets]
        inputs, mask = pad_sequences([np.concatenate([[b], s]) for s in seqs])
        gold, _ = pad_sequences([np.concatenate([s, [b]]) for s in seqs])
        N, T = inputs.shape
        p = self.params_
        x = nd.embedding_lookup(p["embedding"], inputs)
        states, _ = run_lstm(x, mask, p[f"dec_{side}.l0.fw.W_x"], p[f"dec_{side}.l0.fw.W_h"],
                             p[f"dec_{side}.l0.fw.b"], h0=h0)
        if self.condition_output:
            states = nd.add(states, nd.reshape(h0, (N, 1, self.hidden_dim)))
        W_o = nd.transpose(p["embedding"]) if self.tie_embeddings else p[f"dec_{side}.W_o"]
        logits = nd.add(nd.matmul(nd.reshape(states, (N * T, self.hidden_dim)), W_o), p[f"dec_{side}.b_o"])
        logp = nd.log_softmax_rows(logits)
        flat = np.flatnonzero(mask.reshape(-1))
        picked = nd.take(nd.reshape(logp, (N * T * self.n_symbols_,)),
                         flat * self.n_symbols_ + gold.reshape(-1)[flat])
        return nd.neg(nd.mean(picked))

    def _loss(self, triples: Sequence[Triple]) -> Tensor:
        h = self._encode([t[1] for t in triples])
        return nd.add(self._decoder_loss("prev", h, [t[0] for t in triples]),
                      self._decoder_loss("next", h, [t[2] for t in triples]))

    def loss(self, triples: Sequence[Triple]) -> float:
        """Mean pretraining loss (sum of both decoders' cross-entropies)."""
        check_is_fitted(self, "vocab_")
        with nd.no_grad():
            losses = [self._loss(triples[lo: lo + 64]).item() * len(triples[lo: lo + 64])
                      for lo in range(0, len(triples), 64)]
        return float(np.sum(losses) / len(triples))

    # -- estimator API -------------------------------------------------------------

    def fit(self, X, y=None):
        """Pretrain on sentence triples, or on expressions via :func:`sentence_triples`."""
        items = list(X)
        if items and isinstance(items[0], Expression):
            items = sentence_triples(check_expressions(items))
        triples = [tuple(t) for t in items]
        if not triples:
            raise ValueError("skip-thought: empty corpus")
        rng = np.random.default_rng(self.random_state)
        self._build(_sentence_vocab(s for t in triples for s in t), rng)
        order = rng.permutation(len(triples))
        n_hold = int(round(self.holdout * len(triples)))
        if n_hold >= len(triples):
            n_hold = 0
        held = [triples[i] for i in order[:n_hold]]
        train = [triples[i] for i in order[n_hold:]]

        opt = Adam(self.params_, lr=self.lr, clip_norm=self.clip_norm)
        self.history_ = [{"epoch": 0, "heldout_loss": self.loss(held) if held else None}]
        for epoch in range(1, self.epochs + 1):
            perm = rng.permutation(len(train))
            losses = []
            for lo in range(0, len(perm), self.batch_size):
                loss = self._loss([train[i] for i in perm[lo: lo + self.batch_size]])
                nd.backward(loss)
                opt.step()
                losses.append(loss.item())
            rec = {"epoch": epoch, "train_loss": float(np.mean(losses)),
                   "heldout_loss": self.loss(held) if held else None}
            self.history_.append(rec)
            if self.verbose:
                logger.info("skipthought epoch %d %s", epoch, rec)
        return self

    def transform(self, sentences: Sequence[str]) -> np.ndarray:
        """Sentence vectors: the encoder's final hidden state."""
        check_is_fitted(self, "vocab_")
        out = []
        with nd.no_grad():
            for lo in range(0, len(sentences), 64):
                out.append(self._encode(sentences[lo: lo + 64]).data)
        return np.concatenate(out) if out else np.zeros((0, self.hidden_dim))

    def expression_vector(self, surface: str) -> np.ndarray:
        with nd.no_grad():
            return expression_vector(self.params_["embedding"], self._ids(surface)).data

    def score_senses(self, X: Sequence[Expression]) -> list[SenseScores]:
        check_is_fitted(self, "vocab_")
        exprs = check_expressions(X, allow_empty=True)
        out = []
        for e in exprs:
            scores, flagged = cosine_scores(self.transform(e.descriptions), self.expression_vector(e.surface))
            out.append(SenseScores(e.id, self.model_name, tuple(scores), zero_norm=tuple(flagged)))
        return out

    def predict(self, X: Sequence[Expression]) -> np.ndarray:
        return np.array([s.top for s in self.score_senses(X)], dtype=np.int64)

    def save(self, path, extra_meta: dict | None = None) -> None:
        check_is_fitted(self, "vocab_")
        meta = {"model": self.model_name, "estimator": type(self).__name__,
                "hyperparameters": self.get_params(), "vocab": self.vocab_.to_dict(),
                "history": self.history_, **(extra_meta or {})}
        checkpoint.save(path, {k: p.data for k, p in self.params_.items()}, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = checkpoint.load(path)
        if meta.get("estimator") != cls.__name__:
            raise checkpoint.CheckpointError(f"checkpoint holds {meta.get('estimator')}, not {cls.__name__}")
        est = cls(**meta["hyperparameters"])
        est._build(Vocab.from_dict(meta["vocab"]), np.random.default_rng(est.random_state))
        if set(est.params_) != set(arrays):
            raise checkpoint.CheckpointError("checkpoint parameters do not match the architecture")
        for k, p in est.params_.items():
            p.data[...] = arrays[k]
        est.history_ = meta["history"]
        return est
