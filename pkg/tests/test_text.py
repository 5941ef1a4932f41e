import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aspectsum.errors import CorpusFormatError, ValidationError
from aspectsum.text import (
    AspectSchema,
    build_vocabulary,
    corpus_stats,
    encode,
    load_corpus,
    load_reviews,
    make_labeled,
    make_sentence,
    segment_review,
    tokenize,
)


class TestSegmentReview:
    def test_two_clauses(self):
        assert segment_review("Great phone. Battery dies fast!") == [
            "Great phone.",
            "Battery dies fast!",
        ]

    def test_empty_input(self):
        assert segment_review("") == []

    def test_decimal_not_split(self):
        assert segment_review("I paid $5.99 for it.") == ["I paid $5.99 for it."]

    def test_hand_annotated_fixture(self, segmentation_cases):
        assert len(segmentation_cases) >= 50
        for text, expected in segmentation_cases:
            assert segment_review(text) == expected, f"input: {text!r}"

    @given(st.text(max_size=200))
    @settings(max_examples=300, deadline=None)
    def test_no_empty_sentence_and_reconstruction(self, text):
        pieces = segment_review(text)
        assert all(p.strip() for p in pieces)
        # Concatenation reconstructs the input up to whitespace.
        assert "".join("".join(p.split()) for p in pieces) == "".join(text.split())


class TestTokenize:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("Battery dies fast!", ["battery", "dies", "fast", "!"]),
            ("runs smoothly, fast", ["runs", "smoothly", ",", "fast"]),
            ("don't", ["don't"]),
            ("", []),
            ("'quoted'", ["'", "quoted", "'"]),
            ("$5.99", ["$", "5", ".", "99"]),
        ],
    )
    def test_examples(self, text, expected):
        assert tokenize(text) == expected

    @given(st.text(max_size=100))
    @settings(max_examples=200, deadline=None)
    def test_tokens_are_lowercase_and_spaceless(self, text):
        for tok in tokenize(text):
            assert tok == tok.lower()
            assert not any(ch.isspace() for ch in tok)


class TestVocabulary:
    def test_min_count_one(self):
        # Brute-force frequency count: {"a": 2, "b": 1}, both kept.
        vocab = build_vocabulary([["a", "b"], ["a"]], min_count=1)
        assert vocab.size == 4
        assert vocab.tokens == ("<pad>", "<unk>", "a", "b")

    def test_reserved_ids(self):
        vocab = build_vocabulary([["x"]], min_count=1)
        assert vocab.pad_id == 0
        assert vocab.unk_id == 1

    def test_min_count_two(self):
        vocab = build_vocabulary([["a", "b"], ["a"]], min_count=2)
        assert vocab.size == 3
        assert "b" not in vocab.index

    def test_frequency_then_lexicographic_order(self):
        vocab = build_vocabulary([["z", "z", "m", "a"]], min_count=1)
        assert vocab.tokens[2:] == ("z", "a", "m")

    def test_index_excludes_reserved(self):
        vocab = build_vocabulary([["a"]], min_count=1)
        assert all(i >= 2 for i in vocab.index.values())
        assert sorted(vocab.index.values()) == list(range(2, vocab.size))

    @given(
        st.lists(
            st.lists(st.sampled_from(["a", "b", "cc", "d", "!"]), max_size=6),
            max_size=10,
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_deterministic(self, sents):
        v1 = build_vocabulary(sents, min_count=1)
        v2 = build_vocabulary(list(sents), min_count=1)
        assert v1.tokens == v2.tokens
        assert v1.index == v2.index


class TestEncode:
    def test_padding(self):
        vocab = build_vocabulary([["a", "b"]], min_count=1)
        s = make_sentence("a b", vocab)
        ids = encode(s, vocab, r=1)
        assert ids.tolist() == [0, vocab.index["a"], vocab.index["b"], 0]

    def test_oov_maps_to_unk(self):
        vocab = build_vocabulary([["a"]], min_count=1)
        s = make_sentence("zzz-unseen", vocab, tokens=["zzz-unseen"])
        assert encode(s, vocab, r=1).tolist() == [0, 1, 0]

    def test_empty_sentence(self):
        vocab = build_vocabulary([["a"]], min_count=1)
        s = make_sentence("", vocab)
        assert encode(s, vocab, r=1).tolist() == [0, 0]

    @given(st.lists(st.sampled_from(["a", "b", "q"]), max_size=8), st.integers(0, 4))
    @settings(max_examples=100, deadline=None)
    def test_length_and_roundtrip(self, toks, r):
        vocab = build_vocabulary([["a", "b"]], min_count=1)
        s = make_sentence(" ".join(toks), vocab, tokens=toks)
        ids = encode(s, vocab, r)
        assert len(ids) == len(toks) + 2 * r
        in_vocab = [t for t in toks if t in vocab.index]
        if len(in_vocab) == len(toks):
            stripped = ids[r : len(ids) - r] if r else ids
            assert vocab.decode(stripped) == list(toks)


class TestLabeledSentence:
    def test_sentiment_requires_aspect(self):
        vocab = build_vocabulary([["a"]], min_count=1)
        s = make_sentence("a", vocab)
        with pytest.raises(ValidationError):
            make_labeled(s, [False, False], True)
        with pytest.raises(ValidationError):
            make_labeled(s, [True, False], None)


class TestLoadCorpus:
    SCHEMA = AspectSchema(names=("battery", "screen"))

    def write(self, tmp_path, lines):
        p = tmp_path / "corpus.jsonl"
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return p

    def test_three_line_fixture(self, tmp_path):
        lines = [
            json.dumps(
                {"review_id": "a", "ordinal": 0, "text": "battery is bad",
                 "aspects": ["battery"], "sentiment": "neg"}
            ),
            json.dumps(
                {"review_id": "a", "ordinal": 1, "text": "nice screen and battery",
                 "aspects": ["battery", "screen"], "sentiment": "pos"}
            ),
            json.dumps(
                {"review_id": "b", "ordinal": 0, "text": "came in a big box",
                 "aspects": [], "sentiment": None}
            ),
        ]
        corpus = load_corpus(self.write(tmp_path, lines), self.SCHEMA)
        assert len(corpus) == 3
        assert corpus.sentences[0].aspects.tolist() == [True, False]
        assert corpus.sentences[0].sentiment is False
        assert corpus.sentences[1].aspects.tolist() == [True, True]
        assert corpus.sentences[1].sentiment is True
        assert corpus.sentences[2].aspects.tolist() == [False, False]
        assert corpus.sentences[2].sentiment is None

    def test_sentiment_without_aspect_rejected(self, tmp_path):
        line = json.dumps(
            {"review_id": "a", "ordinal": 0, "text": "x",
             "aspects": [], "sentiment": "pos"}
        )
        with pytest.raises(ValidationError, match="line 1"):
            load_corpus(self.write(tmp_path, [line]), self.SCHEMA)

    def test_unknown_aspect_rejected(self, tmp_path):
        line = json.dumps(
            {"review_id": "a", "ordinal": 0, "text": "x",
             "aspects": ["price"], "sentiment": "pos"}
        )
        with pytest.raises(ValidationError, match="price"):
            load_corpus(self.write(tmp_path, [line]), self.SCHEMA)

    def test_malformed_line_reports_number(self, tmp_path):
        good = json.dumps(
            {"review_id": "a", "ordinal": 0, "text": "x",
             "aspects": [], "sentiment": None}
        )
        with pytest.raises(CorpusFormatError, match="line 2"):
            load_corpus(self.write(tmp_path, [good, "{not json"]), self.SCHEMA)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.jsonl"
        p.write_text("", encoding="utf-8")
        corpus = load_corpus(p, self.SCHEMA)
        assert len(corpus) == 0

    def test_bundled_fixture(self, fixture_corpus):
        assert len(fixture_corpus) == 50
        assert fixture_corpus.schema.count == 5


class TestLoadReviews:
    def test_roundtrip(self, tmp_path):
        p = tmp_path / "reviews.jsonl"
        p.write_text(
            json.dumps({"review_id": "r1", "text": "Good. Bad!"}) + "\n",
            encoding="utf-8",
        )
        assert load_reviews(p) == [("r1", "Good. Bad!")]

    def test_missing_field(self, tmp_path):
        p = tmp_path / "reviews.jsonl"
        p.write_text(json.dumps({"review_id": "r1"}) + "\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError, match="line 1"):
            load_reviews(p)


class TestCorpusStats:
    def test_empty(self):
        schema = AspectSchema(names=("battery",))
        vocab = build_vocabulary([], min_count=1)
        from aspectsum.text import Corpus

        stats = corpus_stats(Corpus(schema=schema, sentences=(), vocabulary=vocab))
        assert stats == {"battery": 0, "others": 0, "all": 0}

    def test_hand_enumerated(self, tmp_path):
        # One dual-aspect sentence: counted once under each of its aspects.
        schema = AspectSchema(names=("battery", "screen"))
        lines = [
            json.dumps({"review_id": "a", "ordinal": 0, "text": "battery bad",
                        "aspects": ["battery"], "sentiment": "neg"}),
            json.dumps({"review_id": "a", "ordinal": 1, "text": "screen and battery good",
                        "aspects": ["battery", "screen"], "sentiment": "pos"}),
            json.dumps({"review_id": "a", "ordinal": 2, "text": "arrived late",
                        "aspects": [], "sentiment": None}),
        ]
        p = tmp_path / "c.jsonl"
        p.write_text("\n".join(lines), encoding="utf-8")
        stats = corpus_stats(load_corpus(p, schema))
        assert stats == {"battery": 2, "screen": 1, "others": 1, "all": 3}

    def test_fixture_totals_bound(self, fixture_corpus):
        stats = corpus_stats(fixture_corpus)
        per_aspect = sum(stats[n] for n in fixture_corpus.schema.names)
        mapped = stats["all"] - stats["others"]
        assert per_aspect >= mapped
        # The fixture contains two dual-aspect sentences.
        assert per_aspect == mapped + 2
