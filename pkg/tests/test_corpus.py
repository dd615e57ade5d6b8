import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from primalsense.corpus import (
    PAD,
    UNK,
    CorpusError,
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
    load_running_text,
    load_split,
    parse_lines,
    write_running_text,
    write_split,
)
from primalsense.validation import check_expressions, target_index

from conftest import make_expr


def _record(eid, m, gold=None, split=None, positions=None):
    positions = positions or list(range(1, m + 1))
    rec = {"id": eid, "surface": "xy",
           "senses": [{"id": f"{eid}{k}", "description": f"desc {k}", "listed_position": p}
                      for k, p in enumerate(positions)]}
    if gold is not None:
        rec["senses"][gold]["gold_primal"] = True
    if split:
        rec["split"] = split
    return json.dumps(rec)


class TestExpression:
    def test_weak_label_is_first_listed_sense(self):
        e = make_expr(descs=("a", "b", "c"), first=2)
        assert e.weak_label_index == 2
        assert e.senses[2].listed_position == 1
        assert e.m == 3

    def test_gold_index(self):
        assert make_expr(gold=1).gold_index == 1
        assert make_expr().gold_index is None

    def test_single_sense_rejected(self):
        with pytest.raises(CorpusError, match="fewer than 2"):
            make_expr(descs=("only",))

    def test_position_permutation(self):
        senses = (Sense("a", "x", 1), Sense("b", "y", 1))
        with pytest.raises(CorpusError, match="position permutation violated"):
            Expression("e", "s", senses)

    def test_at_most_one_gold(self):
        senses = (Sense("a", "x", 1, True), Sense("b", "y", 2, True))
        with pytest.raises(CorpusError, match="more than one gold"):
            Expression("e", "s", senses)

    def test_empty_description_rejected(self):
        with pytest.raises(CorpusError):
            Sense("a", "  ", 1)

    def test_record_round_trip(self):
        e = make_expr(gold=0, tf=12, split="test")
        (back,) = parse_lines([json.dumps(e.to_record())])
        assert back == e


class TestLoading:
    def test_single_sense_records_dropped_and_counted(self):
        corpus = parse_lines([_record("a", 3), _record("b", 1), "", _record("c", 2)])
        assert [e.id for e in corpus] == ["a", "c"]
        assert corpus.n_dropped == 1

    def test_errors_carry_line_numbers(self):
        with pytest.raises(CorpusError, match="line 2") as err:
            parse_lines([_record("a", 2), "{not json"])
        assert err.value.line == 2
        with pytest.raises(CorpusError, match="line 2: duplicate"):
            parse_lines([_record("a", 2), _record("a", 2)])
        with pytest.raises(CorpusError, match="line 1: missing field 'senses'"):
            parse_lines([json.dumps({"id": "a", "surface": "b"})])
        with pytest.raises(CorpusError, match="line 1: position permutation"):
            parse_lines([_record("a", 3, positions=[1, 2, 2])])
        with pytest.raises(CorpusError, match="unknown split"):
            parse_lines([_record("a", 2, split="dev")])

    def test_load_split_from_one_file(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("\n".join([_record("a", 2, split="train"), _record("b", 3, gold=1, split="validation"),
                                   _record("c", 2, gold=0, split="test")]))
        split = load_split(path)
        assert [len(split[n]) for n in ("train", "validation", "test")] == [1, 1, 1]

    def test_load_split_from_three_files(self, tmp_path):
        for name, rec in (("tr", _record("a", 2)), ("va", _record("b", 2, gold=0)), ("te", _record("c", 2, gold=1))):
            (tmp_path / name).write_text(rec + "\n")
        split = load_split(train=tmp_path / "tr", validation=tmp_path / "va", test=tmp_path / "te")
        assert split.test[0].split == "test"

    def test_split_requires_split_field(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(_record("a", 2) + "\n")
        with pytest.raises(CorpusError, match="without a split"):
            load_split(path)

    def test_split_validation(self):
        e = make_expr("x", gold=0)
        with pytest.raises(CorpusError):
            CorpusSplit(train=[e], validation=[e], test=[])
        with pytest.raises(CorpusError):
            CorpusSplit(train=[], validation=[make_expr("v")], test=[])

    def test_write_and_reload(self, tmp_path, small_split):
        write_split(tmp_path / "c.jsonl", small_split)
        back = load_split(tmp_path / "c.jsonl")
        assert back.train == small_split.train and back.test == small_split.test
        write_running_text(tmp_path / "r.jsonl", small_split.running_text)
        assert load_running_text(tmp_path / "r.jsonl") == [tuple(d) for d in small_split.running_text]

    def test_malformed_running_text(self, tmp_path):
        (tmp_path / "r.jsonl").write_text('{"text": 1}\n')
        with pytest.raises(CorpusError, match="line 1"):
            load_running_text(tmp_path / "r.jsonl")


class TestLabelsAndStats:
    def test_assign_weak_labels(self):
        e = Expression("e", "s", (Sense("a", "x", 2), Sense("b", "y", 1)), weak_label_index=0)
        assert assign_weak_labels([e])[0].weak_label_index == 1

    def test_stats(self):
        stats = corpus_stats([make_expr(descs=("ab", "abcd")), make_expr(descs=("a", "b", "c"))])
        assert stats.count == 2
        assert stats.mean_senses == pytest.approx(2.5)
        assert stats.mean_description_length == pytest.approx(9 / 5)

    def test_target_index_prefers_gold(self):
        assert target_index(make_expr(first=2, gold=1)) == 1
        assert target_index(make_expr(first=2)) == 2

    def test_check_expressions(self):
        with pytest.raises(ValueError):
            check_expressions([])
        with pytest.raises(TypeError):
            check_expressions(["nope"])
        with pytest.raises(CorpusError):
            check_expressions([make_expr()], require_gold=True)


class TestVocab:
    def test_reserved_indices_and_ordering(self):
        vocab = build_vocab([make_expr(surface="b", descs=("bba", "cab"))])
        assert vocab.chars == ("b", "a", "c")
        assert (vocab.lookup("b"), vocab.lookup("?")) == (2, UNK)
        assert vocab.char(PAD) is None and vocab.char(2) == "b"
        assert len(vocab) == 5

    def test_min_count(self):
        vocab = build_vocab([make_expr(surface="b", descs=("bba", "cab"))], min_count=2)
        assert vocab.chars == ("b", "a")

    def test_serialisation(self):
        vocab = Vocab(tuple("xyz"))
        assert Vocab.from_dict(vocab.to_dict()) == vocab

    def test_encode_truncates(self):
        vocab = Vocab(tuple("ab"))
        np.testing.assert_array_equal(encode_text(vocab, "abzab", 4), [2, 3, UNK, 2])
        assert encode_text(vocab, "", 4).size == 0

    @settings(max_examples=50, deadline=None)
    @given(st.text(min_size=1, max_size=30), st.integers(1, 40))
    def test_encode_property(self, text, max_len):
        vocab = Vocab(tuple(sorted(set(text))))
        ids = encode_text(vocab, text, max_len)
        assert len(ids) == min(len(text), max_len)
        assert all(vocab.char(int(i)) == c for i, c in zip(ids, text))


class TestSynthetic:
    def test_deterministic(self):
        spec = SynthSpec(n_train=20, n_validation=5, n_test=5)
        assert generate_synthetic(spec, 3) == generate_synthetic(spec, 3)
        assert generate_synthetic(spec, 3).train != generate_synthetic(spec, 4).train

    def test_shape_and_labels(self, small_split):
        assert (len(small_split.train), len(small_split.validation), len(small_split.test)) == (80, 30, 30)
        for e in small_split.train + small_split.test:
            assert 2 <= e.m <= 6
            assert e.gold_index is not None
        assert len(small_split.running_text) == 80

    def test_first_position_rate(self):
        split = generate_synthetic(SynthSpec(n_train=3000, n_validation=0, n_test=0), seed=0)
        rate = np.mean([e.weak_label_index == e.gold_index for e in split.train])
        assert rate == pytest.approx(0.44, abs=0.03)

    def test_primal_carries_the_marker(self, small_split):
        marker = SynthSpec().alphabet[:3]
        assert all(marker in e.senses[e.gold_index].description for e in small_split.train)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SynthSpec(min_senses=1).validate()
        with pytest.raises(ValueError):
            SynthSpec(first_prob=1.5).validate()
