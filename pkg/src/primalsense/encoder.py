"""Character-level sense encoder.

Embeds each description, runs a (bi)directional LSTM stack over it and
pools the hidden states with attention keyed on the expression vector
(mean embedding of the expression's characters). The result ``v_i`` is
``tanh(W_v [h_last; h_bar])``.

All components work on padded batches: ``N`` sequences of at most ``L``
positions with a boolean validity mask. Recurrent updates at padded
positions carry the previous state forward, so the forward direction's
final state sits on the last real character and the backward direction
only starts once it reaches real characters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import ndgrad as nd
from .corpus import Expression, Vocab, encode_text
from .ndgrad import ShapeError, Tensor

INIT_SCALE = 0.08
ATTENTION_KINDS = ("bilinear", "additive")


def uniform_init(rng: np.random.Generator, shape, scale: float = INIT_SCALE) -> Tensor:
    return nd.parameter(rng.uniform(-scale, scale, size=shape))


def pad_sequences(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad integer sequences with 0; returns ``(ids, mask)``."""
    if any(len(s) == 0 for s in seqs):
        raise ValueError("cannot encode an empty sequence")
    width = max(len(s) for s in seqs)
    ids = np.zeros((len(seqs), width), dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for k, s in enumerate(seqs):
        ids[k, : len(s)] = s
        mask[k, : len(s)] = True
    return ids, mask


@dataclass
class SenseBatch:
    """Padded description and surface ids for a group of expressions.

    ``sense_expr[n]`` is the expression (row of ``surf_ids``) owning sense
    row ``n``; ``offsets`` delimits each expression's senses.
    """

    desc_ids: np.ndarray
    desc_mask: np.ndarray
    surf_ids: np.ndarray
    surf_mask: np.ndarray
    sense_expr: np.ndarray
    offsets: np.ndarray

    @property
    def n_expressions(self) -> int:
        return len(self.offsets) - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def listwise_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Index grid (B x m_max) into sense rows, padded with ``N``, and its mask."""
        sizes = self.sizes
        width = int(sizes.max())
        cols = np.arange(width)
        mask = cols[None, :] < sizes[:, None]
        grid = np.where(mask, self.offsets[:-1, None] + cols[None, :], self.offsets[-1])
        return grid, mask


def make_batch(exprs: Sequence[Expression], vocab: Vocab, max_len: int) -> SenseBatch:
    descs = [encode_text(vocab, s.description, max_len) for e in exprs for s in e.senses]
    surfs = [encode_text(vocab, e.surface, max_len) for e in exprs]
    desc_ids, desc_mask = pad_sequences(descs)
    surf_ids, surf_mask = pad_sequences(surfs)
    sizes = np.array([e.m for e in exprs], dtype=np.int64)
    return SenseBatch(
        desc_ids=desc_ids,
        desc_mask=desc_mask,
        surf_ids=surf_ids,
        surf_mask=surf_mask,
        sense_expr=np.repeat(np.arange(len(exprs)), sizes),
        offsets=np.concatenate([[0], np.cumsum(sizes)]),
    )


# -- expression vector ---------------------------------------------------------

def expression_vector(table: Tensor, surface_ids, mask=None) -> Tensor:
    """Mean embedding row of the expression's characters.

    Accepts a single id sequence (returns shape ``(d,)``) or a padded batch
    with its mask (returns ``(B, d)``).
    """
    ids = np.asarray(surface_ids, dtype=np.int64)
    if ids.ndim == 1:
        if ids.size == 0:
            raise ValueError("expression_vector: empty surface")
        return nd.mean(nd.embedding_lookup(table, ids), axis=0)
    if mask is None:
        mask = np.ones(ids.shape, dtype=bool)
    counts = mask.sum(axis=1)
    if (counts == 0).any():
        raise ValueError("expression_vector: empty surface")
    emb = nd.embedding_lookup(table, ids)
    summed = nd.sum(nd.mul(emb, mask[:, :, None].astype(np.float64)), axis=1)
    return nd.mul(summed, (1.0 / counts)[:, None])


# -- LSTM ----------------------------------------------------------------------

class LstmStack:
    """Multi-layer LSTM, bidirectional by default.

    Gate columns are ordered ``[input, forget, output, candidate]``. Layer 1
    reads ``input_dim`` features; deeper layers read the concatenated
    directions of the layer below.
    """

    def __init__(self, input_dim: int, hidden_dim: int, n_layers: int = 1,
                 bidirectional: bool = True, dropout: float = 0.0,
                 rng: np.random.Generator | None = None, prefix: str = "lstm"):
        if min(input_dim, hidden_dim, n_layers) < 1:
            raise ValueError("LSTM sizes must be positive")
        rng = rng or np.random.default_rng(0)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.bidirectional = bidirectional
        self.dropout = dropout
        self.directions = ("fw", "bw") if bidirectional else ("fw",)
        self.params: dict[str, Tensor] = {}
        H = hidden_dim
        for layer in range(n_layers):
            in_dim = input_dim if layer == 0 else H * len(self.directions)
            for d in self.directions:
                key = f"{prefix}.l{layer}.{d}"
                self.params[f"{key}.W_x"] = uniform_init(rng, (in_dim, 4 * H))
                self.params[f"{key}.W_h"] = uniform_init(rng, (H, 4 * H))
                bias = np.zeros(4 * H)
                bias[H: 2 * H] = 1.0
                self.params[f"{key}.b"] = nd.parameter(bias)
        self.prefix = prefix

    @property
    def output_dim(self) -> int:
        return self.hidden_dim * len(self.directions)

    def layer_params(self, layer: int, direction: str) -> tuple[Tensor, Tensor, Tensor]:
        key = f"{self.prefix}.l{layer}.{direction}"
        return self.params[f"{key}.W_x"], self.params[f"{key}.W_h"], self.params[f"{key}.b"]

    def forward(self, x: Tensor, mask: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
        """Run the stack over ``x`` (N x L x input_dim).

        Returns the top layer's per-position states (N x L x output_dim) and
        its final state: forward direction after the last real character
        concatenated with the backward direction after the first.
        """
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeError(f"lstm_forward: expected (N, L, {self.input_dim}) input, got {x.shape}")
        if x.shape[1] == 0:
            raise ValueError("lstm_forward: empty sequence")
        inputs = x
        for layer in range(self.n_layers):
            if layer > 0:
                inputs = nd.dropout(inputs, self.dropout, train, rng)
            outs, finals = [], []
            for d in self.directions:
                W_x, W_h, b = self.layer_params(layer, d)
                seq, (h, _) = run_lstm(inputs, mask, W_x, W_h, b, reverse=(d == "bw"))
                outs.append(seq)
                finals.append(h)
            inputs = outs[0] if len(outs) == 1 else nd.concat(outs, axis=2)
            last = finals[0] if len(finals) == 1 else nd.concat(finals, axis=1)
        return inputs, last


def run_lstm(x: Tensor, mask: np.ndarray, W_x: Tensor, W_h: Tensor, b: Tensor,
             reverse: bool = False, h0: Tensor | None = None, c0: Tensor | None = None,
             ) -> tuple[Tensor, tuple[Tensor, Tensor]]:
    """One LSTM direction over a padded batch; returns states and final ``(h, c)``."""
    N, L, in_dim = x.shape
    H = W_h.shape[0]
    proj = nd.add(nd.matmul(nd.reshape(x, (N * L, in_dim)), W_x), b)
    proj = nd.reshape(proj, (N, L, 4 * H))
    h = h0 if h0 is not None else nd.tensor(np.zeros((N, H)))
    c = c0 if c0 is not None else nd.tensor(np.zeros((N, H)))
    full = bool(mask.all())
    states: list[Tensor | None] = [None] * L
    steps = range(L - 1, -1, -1) if reverse else range(L)
    for t in steps:
        gates = nd.add(proj[:, t, :], nd.matmul(h, W_h))
        sig = nd.sigmoid(gates[:, : 3 * H])
        cand = nd.tanh(gates[:, 3 * H:])
        c_new = nd.add(nd.mul(sig[:, H: 2 * H], c), nd.mul(sig[:, :H], cand))
        h_new = nd.mul(sig[:, 2 * H:], nd.tanh(c_new))
        if full:
            h, c = h_new, c_new
        else:
            keep = mask[:, t: t + 1]
            h = nd.where(keep, h_new, h)
            c = nd.where(keep, c_new, c)
        states[t] = h
    return nd.stack(states, axis=1), (h, c)


def lstm_forward(stack: LstmStack, inputs: Tensor, train: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    """Hidden states for one unpadded embedded sequence (L x input_dim)."""
    if inputs.ndim != 2:
        raise ShapeError(f"lstm_forward: expected (L, d) input, got {inputs.shape}")
    if inputs.shape[0] == 0:
        raise ValueError("lstm_forward: empty sequence")
    seq, _ = stack.forward(nd.reshape(inputs, (1,) + inputs.shape),
                           np.ones((1, inputs.shape[0]), dtype=bool), train, rng)
    return nd.reshape(seq, seq.shape[1:])


# -- attention -----------------------------------------------------------------

class AttentionPool:
    """Attention over hidden states keyed by the expression vector.

    ``bilinear`` scores ``v_e^T W_a h_j``; ``additive`` scores
    ``w^T tanh(U v_e + W h_j)``.
    """

    def __init__(self, key_dim: int, state_dim: int, out_dim: int, kind: str = "bilinear",
                 rng: np.random.Generator | None = None, prefix: str = "attn"):
        if kind not in ATTENTION_KINDS:
            raise ValueError(f"unknown attention kind {kind!r}")
        rng = rng or np.random.default_rng(0)
        self.kind = kind
        self.key_dim = key_dim
        self.state_dim = state_dim
        self.out_dim = out_dim
        self.params: dict[str, Tensor] = {}
        if kind == "bilinear":
            self.params[f"{prefix}.W_a"] = uniform_init(rng, (key_dim, state_dim))
        else:
            self.params[f"{prefix}.U"] = uniform_init(rng, (key_dim, state_dim))
            self.params[f"{prefix}.W"] = uniform_init(rng, (state_dim, state_dim))
            self.params[f"{prefix}.w"] = uniform_init(rng, (state_dim, 1))
        self.params[f"{prefix}.W_v"] = uniform_init(rng, (2 * state_dim, out_dim))
        self.prefix = prefix

    def weights(self, states: Tensor, keys: Tensor, mask: np.ndarray) -> Tensor:
        """Attention distribution (N x L) over positions."""
        N, L, D = states.shape
        if keys.shape != (N, self.key_dim) or D != self.state_dim:
            raise ShapeError(
                f"attention_pool: keys {keys.shape} / states {states.shape} do not match "
                f"({self.key_dim}, {self.state_dim})")
        p = self.prefix
        if self.kind == "bilinear":
            u = nd.matmul(keys, self.params[f"{p}.W_a"])
            scores = nd.sum(nd.mul(states, nd.reshape(u, (N, 1, D))), axis=2)
        else:
            k = nd.reshape(nd.matmul(keys, self.params[f"{p}.U"]), (N, 1, D))
            s = nd.reshape(nd.matmul(nd.reshape(states, (N * L, D)), self.params[f"{p}.W"]), (N, L, D))
            hidden = nd.tanh(nd.add(s, k))
            scores = nd.reshape(nd.matmul(nd.reshape(hidden, (N * L, D)), self.params[f"{p}.w"]), (N, L))
        return nd.softmax_rows(scores, mask)

    def forward(self, states: Tensor, last: Tensor, keys: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        """Returns ``(v, alpha)`` with ``v = tanh(W_v [last; sum_j alpha_j h_j])``."""
        alpha = self.weights(states, keys, mask)
        N, L, D = states.shape
        pooled = nd.sum(nd.mul(states, nd.reshape(alpha, (N, L, 1))), axis=1)
        v = nd.tanh(nd.matmul(nd.concat([last, pooled], axis=1), self.params[f"{self.prefix}.W_v"]))
        return v, alpha


def attention_pool(pool: AttentionPool, states: Tensor, v_e: Tensor,
                   last: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Pool one sequence's states (L x D) given its expression vector.

    ``last`` defaults to the final row of ``states``. Returns ``(v_i, alpha)``.
    """
    if states.ndim != 2 or states.shape[0] == 0:
        raise ShapeError(f"attention_pool: expected non-empty (L, D) states, got {states.shape}")
    L, D = states.shape
    if last is None:
        last = states[L - 1]
    v, alpha = pool.forward(nd.reshape(states, (1, L, D)), nd.reshape(last, (1, D)),
                            nd.reshape(v_e, (1, -1)), np.ones((1, L), dtype=bool))
    return nd.reshape(v, (pool.out_dim,)), nd.reshape(alpha, (L,))


# -- full sense encoder ------------------------------------------------------------

class SenseEncoder:
    """Embedding table + LSTM stack + attention pool, with one parameter dict."""

    def __init__(self, vocab_size: int, embedding_dim: int, hidden_dim: int, n_layers: int = 1,
                 dropout: float = 0.0, out_dim: int | None = None, attention: str = "bilinear",
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.embedding = uniform_init(rng, (vocab_size, embedding_dim))
        self.lstm = LstmStack(embedding_dim, hidden_dim, n_layers, bidirectional=True,
                              dropout=dropout, rng=rng)
        out_dim = out_dim or self.lstm.output_dim
        self.pool = AttentionPool(embedding_dim, self.lstm.output_dim, out_dim, kind=attention, rng=rng)
        self.out_dim = out_dim

    @property
    def params(self) -> dict[str, Tensor]:
        return {"embedding": self.embedding, **self.lstm.params, **self.pool.params}

    def encode(self, batch: SenseBatch, train: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        """Sense vectors (N x out_dim) for every sense row of ``batch``."""
        v_e = expression_vector(self.embedding, batch.surf_ids, batch.surf_mask)
        keys = nd.take(v_e, batch.sense_expr)
        x = nd.embedding_lookup(self.embedding, batch.desc_ids)
        states, last = self.lstm.forward(x, batch.desc_mask, train, rng)
        v, _ = self.pool.forward(states, last, keys, batch.desc_mask)
        return v


def sense_vector(encoder: SenseEncoder, description_ids, surface_ids, train: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    """Vector of one sense from its description ids and the expression's surface ids."""
    desc = np.asarray(description_ids, dtype=np.int64)
    surf = np.asarray(surface_ids, dtype=np.int64)
    if desc.size == 0 or surf.size == 0:
        raise ValueError("sense_vector: empty input")
    batch = SenseBatch(desc_ids=desc[None, :], desc_mask=np.ones((1, desc.size), dtype=bool),
                       surf_ids=surf[None, :], surf_mask=np.ones((1, surf.size), dtype=bool),
                       sense_expr=np.zeros(1, dtype=np.int64), offsets=np.array([0, 1]))
    return nd.reshape(encoder.encode(batch, train, rng), (encoder.out_dim,))
