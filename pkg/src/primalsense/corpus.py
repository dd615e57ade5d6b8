"""Expression/sense datasets: loading, weak labels, vocabularies, synthesis.

A corpus file holds one JSON object per line::

    {"id": "e1", "surface": "...", "split": "train",
     "senses": [{"id": "s1", "description": "...", "listed_position": 1,
                 "gold_primal": true}, ...],
     "term_frequency": 1200}

``split`` and ``term_frequency`` are optional. Senses keep the order of
the record; ``listed_position`` carries the order shown on the source page.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")
PAD, UNK = 0, 1


class CorpusError(ValueError):
    """Malformed or inconsistent corpus input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Sense:
    id: str
    description: str
    listed_position: int
    gold_primal: bool | None = None

    def __post_init__(self):
        if not self.description.strip():
            raise CorpusError(f"sense {self.id!r} has an empty description")
        if self.listed_position < 1:
            raise CorpusError(f"sense {self.id!r}: listed_position must be >= 1")


@dataclass(frozen=True)
class Expression:
    id: str
    surface: str
    senses: tuple[Sense, ...]
    weak_label_index: int = -1
    term_frequency: int | None = None
    split: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "senses", tuple(self.senses))
        if not self.surface:
            raise CorpusError(f"expression {self.id!r} has an empty surface")
        if len(self.senses) < 2:
            raise CorpusError(f"expression {self.id!r} has fewer than 2 senses")
        positions = sorted(s.listed_position for s in self.senses)
        if positions != list(range(1, len(self.senses) + 1)):
            raise CorpusError(f"expression {self.id!r}: position permutation violated {positions}")
        if sum(1 for s in self.senses if s.gold_primal) > 1:
            raise CorpusError(f"expression {self.id!r} has more than one gold primal sense")
        if self.term_frequency is not None and self.term_frequency < 0:
            raise CorpusError(f"expression {self.id!r}: negative term_frequency")
        if self.weak_label_index < 0:
            object.__setattr__(self, "weak_label_index", _first_listed(self.senses))

    @property
    def m(self) -> int:
        return len(self.senses)

    @property
    def gold_index(self) -> int | None:
        for i, s in enumerate(self.senses):
            if s.gold_primal:
                return i
        return None

    @property
    def descriptions(self) -> list[str]:
        return [s.description for s in self.senses]

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "surface": self.surface,
            "senses": [_sense_record(s) for s in self.senses],
        }
        if self.term_frequency is not None:
            rec["term_frequency"] = self.term_frequency
        if self.split is not None:
            rec["split"] = self.split
        return rec


def _sense_record(s: Sense) -> dict:
    rec = {"id": s.id, "description": s.description, "listed_position": s.listed_position}
    if s.gold_primal is not None:
        rec["gold_primal"] = s.gold_primal
    return rec


def _first_listed(senses: Sequence[Sense]) -> int:
    return next(i for i, s in enumerate(senses) if s.listed_position == 1)


@dataclass(frozen=True)
class CorpusSplit:
    train: list[Expression]
    validation: list[Expression]
    test: list[Expression]
    running_text: list[tuple[str, ...]] = field(default_factory=list)

    def __post_init__(self):
        seen: dict[str, str] = {}
        for name in SPLITS:
            for e in getattr(self, name):
                if e.id in seen:
                    raise CorpusError(f"expression id {e.id!r} appears in both {seen[e.id]} and {name}")
                seen[e.id] = name
        for name in ("validation", "test"):
            missing = [e.id for e in getattr(self, name) if e.gold_index is None]
            if missing:
                raise CorpusError(f"{name} expressions lack a gold label: {missing[:5]}")

    def __getitem__(self, name: str) -> list[Expression]:
        if name not in SPLITS:
            raise KeyError(name)
        return getattr(self, name)


class Corpus(list):
    """List of expressions that also remembers how many records were dropped."""

    def __init__(self, items: Iterable[Expression] = (), n_dropped: int = 0):
        super().__init__(items)
        self.n_dropped = n_dropped


# -- loading ------------------------------------------------------------------

def _parse_record(rec, lineno: int) -> tuple[dict, list[Sense]]:
    if not isinstance(rec, dict):
        raise CorpusError("record is not an object", lineno)
    for key in ("id", "surface", "senses"):
        if key not in rec:
            raise CorpusError(f"missing field {key!r}", lineno)
    if not isinstance(rec["senses"], list):
        raise CorpusError("'senses' must be a list", lineno)
    senses = []
    for s in rec["senses"]:
        try:
            senses.append(Sense(id=str(s["id"]), description=str(s["description"]),
                                listed_position=int(s["listed_position"]),
                                gold_primal=None if s.get("gold_primal") is None else bool(s["gold_primal"])))
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"malformed sense: {exc}", lineno) from None
        except CorpusError as exc:
            raise CorpusError(str(exc), lineno) from None
    positions = sorted(s.listed_position for s in senses)
    if positions != list(range(1, len(senses) + 1)):
        raise CorpusError(f"position permutation violated {positions}", lineno)
    split = rec.get("split")
    if split is not None and split not in SPLITS:
        raise CorpusError(f"unknown split {split!r}", lineno)
    return rec, senses


def parse_lines(lines: Iterable[str]) -> Corpus:
    out = Corpus()
    ids: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON ({exc.msg})", lineno) from None
        rec, senses = _parse_record(rec, lineno)
        eid = str(rec["id"])
        if eid in ids:
            raise CorpusError(f"duplicate expression id {eid!r}", lineno)
        ids.add(eid)
        if len(senses) < 2:
            out.n_dropped += 1
            continue
        tf = rec.get("term_frequency")
        try:
            out.append(Expression(id=eid, surface=str(rec["surface"]), senses=tuple(senses),
                                  term_frequency=None if tf is None else int(tf), split=rec.get("split")))
        except CorpusError as exc:
            raise CorpusError(str(exc), lineno) from None
    if out.n_dropped:
        logger.info("dropped %d single-sense expressions", out.n_dropped)
    return out


def load_corpus(path) -> Corpus:
    """Read and validate a corpus file; single-sense records are dropped and counted."""
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh)


def load_split(path=None, *, train=None, validation=None, test=None) -> CorpusSplit:
    """Build a :class:`CorpusSplit` from one file with ``split`` fields or three files."""
    if path is not None:
        corpus = load_corpus(path)
        parts = {name: [e for e in corpus if e.split == name] for name in SPLITS}
        unassigned = [e.id for e in corpus if e.split is None]
        if unassigned:
            raise CorpusError(f"records without a split field: {unassigned[:5]}")
        return CorpusSplit(**parts)
    paths = {"train": train, "validation": validation, "test": test}
    parts = {}
    for name, p in paths.items():
        parts[name] = [] if p is None else [replace(e, split=name) for e in load_corpus(p)]
    return CorpusSplit(**parts)


def write_corpus(path, exprs: Iterable[Expression]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in exprs:
            fh.write(json.dumps(e.to_record(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def write_split(path, split: CorpusSplit) -> None:
    write_corpus(path, (replace(e, split=name) for name in SPLITS for e in split[name]))


def write_running_text(path, docs: Iterable[Sequence[str]]) -> None:
    """One JSON object ``{"sentences": [...]}`` per document."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d in docs:
            fh.write(json.dumps({"sentences": list(d)}, ensure_ascii=False))
            fh.write("\n")


def load_running_text(path) -> list[tuple[str, ...]]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                docs.append(tuple(str(x) for x in rec["sentences"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"malformed running-text record ({exc})", lineno) from None
    return docs


# -- labels and statistics ------------------------------------------------------

def assign_weak_labels(exprs: Iterable[Expression]) -> list[Expression]:
    """Point each expression's weak label at its first-listed sense."""
    return [replace(e, weak_label_index=_first_listed(e.senses)) for e in exprs]


@dataclass(frozen=True)
class CorpusStats:
    count: int
    mean_senses: float
    mean_description_length: float


def corpus_stats(exprs: Sequence[Expression]) -> CorpusStats:
    if not exprs:
        raise CorpusError("corpus_stats: empty corpus")
    lengths = [len(s.description) for e in exprs for s in e.senses]
    return CorpusStats(
        count=len(exprs),
        mean_senses=float(np.mean([e.m for e in exprs])),
        mean_description_length=float(np.mean(lengths)),
    )


# -- vocabulary -------------------------------------------------------------------

@dataclass(frozen=True)
class Vocab:
    """Character vocabulary; index 0 is padding and index 1 is unknown."""

    chars: tuple[str, ...]
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.chars)) != len(self.chars):
            raise CorpusError("vocab characters must be unique")
        object.__setattr__(self, "index", {c: i + 2 for i, c in enumerate(self.chars)})

    def __len__(self) -> int:
        return len(self.chars) + 2

    def __contains__(self, ch: str) -> bool:
        return ch in self.index

    def lookup(self, ch: str) -> int:
        return self.index.get(ch, UNK)

    def char(self, i: int) -> str | None:
        if i < 2:
            return None
        return self.chars[i - 2]

    def to_dict(self) -> dict:
        return {"chars": "".join(self.chars)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Vocab":
        return cls(tuple(d["chars"]))


def build_vocab(train: Iterable[Expression], min_count: int = 1) -> Vocab:
    """Characters of surfaces and descriptions seen at least ``min_count`` times.

    Ordering is by descending frequency, then code point, so the same corpus
    always yields the same indices.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for e in train:
        counts.update(e.surface)
        for s in e.senses:
            counts.update(s.description)
    if not counts:
        raise CorpusError("build_vocab: no training text")
    kept = sorted((c for c, n in counts.items() if n >= min_count), key=lambda c: (-counts[c], c))
    return Vocab(tuple(kept))


def encode_text(vocab: Vocab, text: str, max_len: int) -> np.ndarray:
    """Indices of the first ``max_len`` characters of ``text``; no padding."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    return np.fromiter((vocab.lookup(c) for c in text[:max_len]), dtype=np.int64,
                       count=min(len(text), max_len))


# -- synthetic corpora --------------------------------------------------------------

DEFAULT_ALPHABET = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"


@dataclass(frozen=True)
class SynthSpec:
    """Shape of a generated corpus.

    The alphabet is split into a fixed definitional marker, a content pool
    (surfaces and topic tokens) and a noise pool. A primal description
    carries the marker, the surface and one topic token for every sense
    deduced from it; each deduced sense reuses its topic token amid noise.

    Every training expression also gets a short running-text document whose
    sentences mention the surface next to characters drawn from the primal
    description (with probability ``primal_usage``) or from another sense.
    """

    n_train: int = 2000
    n_validation: int = 200
    n_test: int = 200
    alphabet_size: int = 40
    min_senses: int = 2
    max_senses: int = 6
    first_prob: float = 0.44
    derived_prob: float = 0.75
    marker_len: int = 3
    surface_len: tuple[int, int] = (2, 3)
    topic_len: int = 2
    desc_len: tuple[int, int] = (16, 28)
    doc_sentences: int = 5
    primal_usage: float = 0.8
    alphabet: str = DEFAULT_ALPHABET

    def validate(self) -> None:
        if min(self.n_train, self.n_validation, self.n_test) < 0:
            raise ValueError("split sizes must be non-negative")
        if not 2 <= self.min_senses <= self.max_senses:
            raise ValueError("need 2 <= min_senses <= max_senses")
        probs = (self.first_prob, self.derived_prob, self.primal_usage)
        if not all(0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet characters must be unique")
        if not self.marker_len + 8 <= self.alphabet_size <= len(self.alphabet):
            raise ValueError("alphabet_size too small for the marker or larger than the alphabet")
        lo, hi = self.surface_len
        if not 1 <= lo <= hi:
            raise ValueError("bad surface_len range")
        lo, hi = self.desc_len
        if not 1 <= lo <= hi:
            raise ValueError("bad desc_len range")
        if self.topic_len < 1 or self.marker_len < 1:
            raise ValueError("marker_len and topic_len must be positive")
        if self.doc_sentences < 0:
            raise ValueError("doc_sentences must be non-negative")


class _Synth:
    def __init__(self, spec: SynthSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        chars = list(spec.alphabet[: spec.alphabet_size])
        self.marker = "".join(chars[: spec.marker_len])
        rest = chars[spec.marker_len:]
        half = len(rest) // 2
        self.content = rest[:half]
        self.noise = rest[half:]
        self.filler = rest

    def _draw(self, pool: Sequence[str], n: int) -> str:
        return "".join(pool[i] for i in self.rng.integers(0, len(pool), size=n))

    def _fill(self, pieces: list[str], pool: Sequence[str]) -> str:
        lo, hi = self.spec.desc_len
        target = int(self.rng.integers(lo, hi + 1))
        pieces = list(pieces)
        used = sum(len(p) for p in pieces)
        while used < target:
            n = int(min(target - used, self.rng.integers(1, 5)))
            pieces.append(self._draw(pool, n))
            used += n
        order = self.rng.permutation(len(pieces))
        return "".join(pieces[i] for i in order)

    def expression(self, eid: str, split: str) -> Expression:
        spec, rng = self.spec, self.rng
        m = int(rng.integers(spec.min_senses, spec.max_senses + 1))
        surface = self._draw(self.content, int(rng.integers(spec.surface_len[0], spec.surface_len[1] + 1)))
        kinds = ["derived" if rng.random() < spec.derived_prob else "unrelated" for _ in range(m - 1)]
        topics = [self._draw(self.content, spec.topic_len) for _ in kinds]

        primal_pieces = [self.marker, surface, surface] + [t for t, k in zip(topics, kinds) if k == "derived"]
        descriptions = [self._fill(primal_pieces, self.filler)]
        for kind, topic in zip(kinds, topics):
            pieces = [topic] if kind == "derived" else []
            if rng.random() < 0.5:
                pieces.append(surface)
            descriptions.append(self._fill(pieces, self.filler))

        # description 0 is primal; choose where it sits on the page
        if rng.random() < spec.first_prob:
            primal_pos = 1
        else:
            primal_pos = int(rng.integers(2, m + 1))
        others = [p for p in range(1, m + 1) if p != primal_pos]
        others = [others[i] for i in rng.permutation(m - 1)]
        positions = [primal_pos] + others

        senses = [
            Sense(id=f"{eid}-s{k}", description=d, listed_position=p, gold_primal=(k == 0))
            for k, (d, p) in enumerate(zip(descriptions, positions))
        ]
        senses.sort(key=lambda s: s.listed_position)
        tf = int(np.exp(rng.uniform(0.0, np.log(1e6))))
        expr = Expression(id=eid, surface=surface, senses=tuple(senses), term_frequency=tf, split=split)
        return expr, self._document(surface, descriptions)

    def _document(self, surface: str, descriptions: list[str]) -> tuple[str, ...]:
        """Running text mentioning the expression, mostly in its primal sense."""
        spec, rng = self.spec, self.rng
        sentences = []
        for _ in range(spec.doc_sentences):
            k = 0 if rng.random() < spec.primal_usage else int(rng.integers(1, len(descriptions)))
            source = descriptions[k]
            n = int(rng.integers(4, 9))
            body = "".join(source[i] for i in rng.integers(0, len(source), size=n))
            cut = int(rng.integers(0, n + 1))
            sentences.append(body[:cut] + surface + body[cut:])
        return tuple(sentences)


def generate_synthetic(spec: SynthSpec | None = None, seed: int = 0) -> CorpusSplit:
    """Deterministic synthetic corpus (pure function of ``spec`` and ``seed``)."""
    spec = spec or SynthSpec()
    spec.validate()
    streams = np.random.SeedSequence(seed).spawn(len(SPLITS))
    parts, docs = {}, []
    for name, ss, n in zip(SPLITS, streams, (spec.n_train, spec.n_validation, spec.n_test)):
        synth = _Synth(spec, np.random.default_rng(ss))
        made = [synth.expression(f"{name}-{k:05d}", name) for k in range(n)]
        parts[name] = [e for e, _ in made]
        if name == "train":
            docs = [d for _, d in made if d]
    return CorpusSplit(**parts, running_text=docs)
