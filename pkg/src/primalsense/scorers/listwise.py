"""Weakly supervised listwise sense classifiers.

Both models encode every sense description with :class:`SenseEncoder` and
normalise a per-sense logit with a softmax over the senses of one
expression. Training minimises the cross-entropy of the first-listed
(weak) sense; the epoch with the best validation P@1 is kept.

* :class:`PatternDetector` scores a sense by ``w_p^T v_i``.
* :class:`RelationGraphScorer` scores it by its mean bilinear deduction
  similarity ``v_i^T M v_j`` to the other senses.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .. import checkpoint
from .. import ndgrad as nd
from ..corpus import Expression, Vocab, assign_weak_labels, build_vocab
from ..encoder import SenseBatch, SenseEncoder, make_batch, uniform_init
from ..ndgrad import Tensor
from ..optim import Adam
from ..validation import check_expressions, target_index
from .base import SenseScores

logger = logging.getLogger(__name__)

INFERENCE_CHUNK = 64


class ListwiseScorer(BaseEstimator):
    """Shared fit/score machinery; subclasses supply the per-expression logits."""

    model_name = "listwise"

    def __init__(self, embedding_dim: int = 32, hidden_dim: int = 24, n_layers: int = 1,
                 dropout: float = 0.2, max_len: int = 200, batch_size: int = 8, epochs: int = 20,
                 lr: float = 1e-3, clip_norm: float | None = 5.0, attention: str = "bilinear",
                 min_count: int = 1, random_state: int = 0, verbose: bool = False):
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.dropout = dropout
        self.max_len = max_len
        self.batch_size = batch_size
        self.epochs = epochs
        self.lr = lr
        self.clip_norm = clip_norm
        self.attention = attention
        self.min_count = min_count
        self.random_state = random_state
        self.verbose = verbose

    # -- subclass hooks ---------------------------------------------------------

    def _init_head(self, rng: np.random.Generator) -> dict[str, Tensor]:
        raise NotImplementedError

    def _logit_grid(self, v: Tensor, batch: SenseBatch) -> tuple[Tensor, np.ndarray]:
        """Logits laid out B x m_max plus the validity mask."""
        raise NotImplementedError

    # -- model plumbing ---------------------------------------------------------------

    def _build(self, vocab: Vocab, rng: np.random.Generator) -> None:
        self.vocab_ = vocab
        self.encoder_ = SenseEncoder(len(vocab), self.embedding_dim, self.hidden_dim, self.n_layers,
                                     dropout=self.dropout, attention=self.attention, rng=rng)
        self.head_ = self._init_head(rng)

    @property
    def params_(self) -> dict[str, Tensor]:
        return {**self.encoder_.params, **self.head_}

    def _forward(self, exprs: Sequence[Expression], train: bool = False,
                 rng: np.random.Generator | None = None) -> tuple[Tensor, np.ndarray, SenseBatch]:
        batch = make_batch(exprs, self.vocab_, self.max_len)
        v = self.encoder_.encode(batch, train, rng)
        logits, mask = self._logit_grid(v, batch)
        return logits, mask, batch

    def _loss(self, exprs: Sequence[Expression], targets: Sequence[int], train: bool = False,
              rng: np.random.Generator | None = None) -> Tensor:
        """Mean listwise cross-entropy of the target senses."""
        logits, mask, _ = self._forward(exprs, train, rng)
        B, W = mask.shape
        logp = nd.log_softmax_rows(logits, mask)
        picked = nd.take(nd.reshape(logp, (B * W,)), np.arange(B) * W + np.asarray(targets))
        return nd.neg(nd.mean(picked))

    # -- estimator API --------------------------------------------------------------

    def fit(self, X: Sequence[Expression], validation: Sequence[Expression] | None = None):
        """Train on weak labels of ``X``; select the epoch by P@1 on ``validation``."""
        exprs = assign_weak_labels(check_expressions(X))
        val = check_expressions(validation, name="validation") if validation else None
        rng = np.random.default_rng(self.random_state)
        self._build(build_vocab(exprs, self.min_count), rng)
        params = self.params_
        opt = Adam(params, lr=self.lr, clip_norm=self.clip_norm)
        targets = np.array([e.weak_label_index for e in exprs])

        self.history_ = []
        best_score, best_state = -np.inf, None
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(len(exprs))
            losses = []
            for lo in range(0, len(order), self.batch_size):
                idx = order[lo: lo + self.batch_size]
                loss = self._loss([exprs[i] for i in idx], targets[idx], train=True, rng=rng)
                nd.backward(loss)
                opt.step()
                losses.append(loss.item())
            record = {"epoch": epoch, "train_loss": float(np.mean(losses))}
            if val is not None:
                record["val_p_at_1"] = self._p_at_1(val)
                if record["val_p_at_1"] > best_score:
                    best_score = record["val_p_at_1"]
                    best_state = {k: p.data.copy() for k, p in params.items()}
                    self.best_epoch_ = epoch
            self.history_.append(record)
            if self.verbose:
                logger.info("%s epoch %d %s", self.model_name, epoch, record)
        if best_state is None:
            self.best_epoch_ = self.epochs
        else:
            for k, p in params.items():
                p.data[...] = best_state[k]
        return self

    def _p_at_1(self, exprs: Sequence[Expression]) -> float:
        probs = self.predict_proba(exprs)
        return float(np.mean([np.argmax(p) == target_index(e) for p, e in zip(probs, exprs)]))

    def predict_proba(self, X: Sequence[Expression]) -> list[np.ndarray]:
        """Per-expression probability that each sense is primal."""
        check_is_fitted(self, "vocab_")
        exprs = check_expressions(X, allow_empty=True)
        out = []
        with nd.no_grad():
            for lo in range(0, len(exprs), INFERENCE_CHUNK):
                chunk = exprs[lo: lo + INFERENCE_CHUNK]
                logits, mask, _ = self._forward(chunk)
                probs = nd.softmax_rows(logits, mask).data
                out.extend(probs[b, : e.m].copy() for b, e in enumerate(chunk))
        return out

    decision_function = predict_proba

    def score_senses(self, X: Sequence[Expression]) -> list[SenseScores]:
        exprs = list(X)
        return [SenseScores(e.id, self.model_name, tuple(p)) for e, p in zip(exprs, self.predict_proba(exprs))]

    def predict(self, X: Sequence[Expression]) -> np.ndarray:
        """Index of the top-ranked sense per expression."""
        return np.array([int(np.argmax(p)) for p in self.predict_proba(X)], dtype=np.int64)

    def score(self, X: Sequence[Expression], y=None) -> float:
        """P@1 against gold labels (weak labels where gold is missing)."""
        return self._p_at_1(check_expressions(X))

    # -- persistence --------------------------------------------------------------

    def save(self, path, extra_meta: dict | None = None) -> None:
        check_is_fitted(self, "vocab_")
        meta = {
            "model": self.model_name,
            "estimator": type(self).__name__,
            "hyperparameters": self.get_params(),
            "vocab": self.vocab_.to_dict(),
            "best_epoch": int(self.best_epoch_),
            "history": self.history_,
            **(extra_meta or {}),
        }
        checkpoint.save(path, {k: p.data for k, p in self.params_.items()}, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = checkpoint.load(path)
        if meta.get("estimator") != cls.__name__:
            raise checkpoint.CheckpointError(f"checkpoint holds {meta.get('estimator')}, not {cls.__name__}")
        est = cls(**meta["hyperparameters"])
        est._build(Vocab.from_dict(meta["vocab"]), np.random.default_rng(est.random_state))
        params = est.params_
        if set(params) != set(arrays):
            raise checkpoint.CheckpointError("checkpoint parameters do not match the architecture")
        for k, p in params.items():
            if p.shape != arrays[k].shape:
                raise checkpoint.CheckpointError(f"shape mismatch for {k!r}")
            p.data[...] = arrays[k]
        est.best_epoch_ = meta["best_epoch"]
        est.history_ = meta["history"]
        return est


def _padded_rows(rows: Tensor, batch: SenseBatch) -> tuple[Tensor, np.ndarray]:
    """Scatter per-sense rows (N x ...) into a B x m_max grid (pad rows are zero)."""
    grid, mask = batch.listwise_index()
    pad = nd.tensor(np.zeros((1,) + rows.shape[1:]))
    return nd.take(nd.concat([rows, pad], axis=0), grid), mask


class PatternDetector(ListwiseScorer):
    """Listwise classifier over attention-pooled sense vectors: ``softmax_i(w_p^T v_i)``."""

    model_name = "pattern"

    def _init_head(self, rng):
        return {"w_p": uniform_init(rng, (self.encoder_.out_dim, 1))}

    def _logit_grid(self, v, batch):
        logits = nd.reshape(nd.matmul(v, self.head_["w_p"]), (v.shape[0],))
        return _padded_rows(logits, batch)


class RelationGraphScorer(ListwiseScorer):
    """Scores sense i by ``mean_{j != i} v_i^T M v_j``, normalised with softmax.

    ``M`` starts at the identity plus small noise. Because the bilinear form
    is not symmetric the induced sense graph is directed.
    """

    model_name = "relgraph"

    def _init_head(self, rng):
        d = self.encoder_.out_dim
        return {"M": nd.parameter(np.eye(d) + rng.uniform(-0.01, 0.01, size=(d, d)))}

    def _similarity_grid(self, v: Tensor, batch: SenseBatch) -> tuple[Tensor, np.ndarray]:
        vp, mask = _padded_rows(v, batch)
        sim = nd.matmul(nd.matmul(vp, self.head_["M"]), nd.transpose(vp, (0, 2, 1)))
        return sim, mask

    def _logit_grid(self, v, batch):
        sim, mask = self._similarity_grid(v, batch)
        W = mask.shape[1]
        sizes = batch.sizes.astype(np.float64)
        pair = mask[:, :, None] & mask[:, None, :] & ~np.eye(W, dtype=bool)[None]
        weights = pair / (sizes - 1.0)[:, None, None]
        xi = nd.sum(nd.mul(sim, weights), axis=2)
        return xi, mask

    def similarity_matrix(self, expr: Expression) -> np.ndarray:
        """``sim[i, j] = v_i^T M v_j`` for one expression (eval mode)."""
        check_is_fitted(self, "vocab_")
        with nd.no_grad():
            batch = make_batch([expr], self.vocab_, self.max_len)
            sim, _ = self._similarity_grid(self.encoder_.encode(batch), batch)
        return sim.data[0].copy()

    def export_graph(self, expr: Expression) -> list[dict]:
        """Directed edge list of the complete sense graph weighted by ``sim``."""
        sim = self.similarity_matrix(expr)
        return [
            {"expr_id": expr.id, "from_sense": expr.senses[i].id, "to_sense": expr.senses[j].id,
             "weight": float(sim[i, j])}
            for i in range(expr.m) for j in range(expr.m) if i != j
        ]
