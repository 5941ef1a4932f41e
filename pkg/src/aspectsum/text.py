"""Review ingestion: sentence segmentation, tokenization, vocabulary, encoding.

The unit of classification is a single review sentence.  Reviews are split
into sentences by a rule-based segmenter, sentences are tokenized into
lowercase word and punctuation tokens, and tokens are mapped to integer ids
through a :class:`Vocabulary` with two reserved entries (PAD = 0, UNK = 1).
``encode`` turns a sentence into a padded id sequence so that every real
word anchors exactly one convolution window downstream.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from hashlib import sha256
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusFormatError, ValidationError

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# Words + intra-word apostrophes stay together; any other non-space,
# non-word character becomes its own token.
_TOKEN_RE = re.compile(r"\w+(?:'\w+)*|[^\w\s]")

_TERMINALS = ".!?"
_CLOSERS = "\"')]}”’»"

# Dotted forms are matched against the text preceding the period, so
# "e.g." is recognized at its final dot.  Only abbreviations that rarely
# end a sentence on their own are safe to list here.
_ABBREVIATIONS = frozenset({
    "mr", "mrs", "ms", "dr", "prof", "rev", "sr", "jr", "st", "vs",
    "etc", "inc", "ltd", "co", "corp", "dept", "fig", "approx", "vol",
    "e.g", "i.e", "a.m", "p.m", "u.s", "u.k", "oz", "lbs",
    "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept",
    "oct", "nov", "dec",
})


def _preceding_word(text: str, i: int) -> str:
    """Letters/digits/dots immediately before position ``i``."""
    j = i
    while j > 0 and (text[j - 1].isalnum() or text[j - 1] == "."):
        j -= 1
    return text[j:i]


def _is_abbreviation_dot(text: str, i: int) -> bool:
    word = _preceding_word(text, i).lstrip(".").lower()
    if not word:
        return False
    if word in _ABBREVIATIONS:
        return True
    # Capitalized single-letter initials such as "J. Smith"; a lone
    # lowercase letter ("don't.") still ends a sentence.
    return len(word) == 1 and word.isalpha() and text[i - 1].isupper()


def _is_decimal_dot(text: str, i: int) -> bool:
    return (
        0 < i < len(text) - 1
        and text[i - 1].isdigit()
        and text[i + 1].isdigit()
    )


def segment_review(text: str) -> list[str]:
    """Split a review into sentences.

    Splits occur after runs of terminal punctuation (``.``, ``!``, ``?``,
    plus any trailing closing quotes/brackets) unless the period closes a
    known abbreviation or sits between two digits.  Whitespace at sentence
    boundaries is dropped; everything else is preserved verbatim, so the
    concatenation of the result reconstructs the input up to boundary
    whitespace.  Never returns an empty string.
    """
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch not in _TERMINALS:
            i += 1
            continue
        if ch == "." and (_is_decimal_dot(text, i) or _is_abbreviation_dot(text, i)):
            i += 1
            continue
        j = i + 1
        while j < n and (text[j] in _TERMINALS or text[j] in _CLOSERS):
            j += 1
        piece = text[start:j].strip()
        if piece:
            sentences.append(piece)
        start = j
        i = j
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def tokenize(sentence_text: str) -> list[str]:
    """Lowercase and split into word/punctuation tokens.

    Punctuation characters become standalone tokens except apostrophes
    inside a word ("don't" stays whole).
    """
    return _TOKEN_RE.findall(sentence_text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """Token/id mapping with reserved PAD (0) and UNK (1) entries.

    ``tokens[0]`` and ``tokens[1]`` are the reserved pseudo-tokens; corpus
    tokens occupy ids 2..size-1 in order of descending corpus frequency
    (ties broken lexicographically), which makes construction deterministic.
    """

    tokens: tuple[str, ...]
    index: dict[str, int]
    pad_id: int = PAD_ID
    unk_id: int = UNK_ID

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self.index.get(token, self.unk_id)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def content_hash(self) -> str:
        h = sha256()
        for tok in self.tokens:
            h.update(tok.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


def build_vocabulary(sentences: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Build a vocabulary from tokenized sentences.

    Keeps every token whose corpus frequency is at least ``min_count``.
    """
    if min_count < 1:
        raise ValidationError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    for toks in sentences:
        counts.update(toks)
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    tokens = (PAD_TOKEN, UNK_TOKEN, *kept)
    index = {tok: i for i, tok in enumerate(kept, start=2)}
    return Vocabulary(tokens=tokens, index=index)


def _frozen_ids(values: Iterable[int]) -> np.ndarray:
    arr = np.asarray(list(values), dtype=np.int64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Sentence:
    """One review sentence with its tokenization and id sequence."""

    raw: str
    tokens: tuple[str, ...]
    ids: np.ndarray
    review_id: str
    ordinal: int

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.ids):
            raise ValidationError("token/id length mismatch")

    @property
    def length(self) -> int:
        return len(self.tokens)


def make_sentence(
    raw: str,
    vocab: Vocabulary,
    review_id: str = "",
    ordinal: int = 0,
    tokens: Sequence[str] | None = None,
) -> Sentence:
    toks = tuple(tokenize(raw) if tokens is None else tokens)
    ids = _frozen_ids(vocab.id_of(t) for t in toks)
    return Sentence(raw=raw, tokens=toks, ids=ids, review_id=review_id, ordinal=ordinal)


@dataclass(frozen=True)
class AspectSchema:
    """Ordered list of the pre-defined aspect names."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.names) < 1:
            raise ValidationError("schema needs at least one aspect")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("aspect names must be distinct")
        if any(not n for n in self.names):
            raise ValidationError("aspect names must be non-empty")

    @property
    def count(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown aspect name: {name!r}") from None


@dataclass(frozen=True)
class LabeledSentence:
    """Sentence plus multi-label aspect flags and an optional sentiment.

    A sentiment label is present exactly when the sentence belongs to at
    least one aspect; no-aspect sentences carry no polarity.
    """

    sentence: Sentence
    aspects: np.ndarray  # bool vector, width C
    sentiment: bool | None  # True = positive

    def __post_init__(self) -> None:
        has_aspect = bool(self.aspects.any())
        if has_aspect != (self.sentiment is not None):
            raise ValidationError(
                "sentiment must be present iff the sentence has at least one aspect"
            )


def make_labeled(
    sentence: Sentence, aspect_flags: Sequence[bool], sentiment: bool | None
) -> LabeledSentence:
    flags = np.asarray(aspect_flags, dtype=bool)
    flags.setflags(write=False)
    return LabeledSentence(sentence=sentence, aspects=flags, sentiment=sentiment)


@dataclass(frozen=True)
class Corpus:
    schema: AspectSchema
    sentences: tuple[LabeledSentence, ...]
    vocabulary: Vocabulary

    def __post_init__(self) -> None:
        for ls in self.sentences:
            if ls.aspects.shape != (self.schema.count,):
                raise ValidationError("aspect flag width does not match schema")

    def __len__(self) -> int:
        return len(self.sentences)


def encode(sentence: Sentence, vocab: Vocabulary, r: int) -> np.ndarray:
    """Padded id sequence of length ``l + 2r``.

    ``r`` PAD ids are prepended and appended; in-vocabulary tokens map
    through the index, everything else maps to UNK.
    """
    if r < 0:
        raise ValidationError(f"padding radius must be >= 0, got {r}")
    out = np.empty(sentence.length + 2 * r, dtype=np.int64)
    out[:r] = vocab.pad_id
    out[r : r + sentence.length] = [vocab.id_of(t) for t in sentence.tokens]
    out[r + sentence.length :] = vocab.pad_id
    return out


def load_schema(path: str | Path) -> AspectSchema:
    """Read an aspect schema file: one aspect name per line."""
    names = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        name = line.strip()
        if name:
            names.append(name)
    if not names:
        raise CorpusFormatError(f"{path}: schema file contains no aspect names")
    return AspectSchema(names=tuple(names))


_SENTIMENT_VALUES = {"pos": True, "neg": False, None: None}


def _parse_corpus_line(obj: object, schema: AspectSchema, lineno: int) -> dict:
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"line {lineno}: record is not an object")
    for key, types in (
        ("review_id", str),
        ("ordinal", int),
        ("text", str),
        ("aspects", list),
    ):
        if key not in obj:
            raise CorpusFormatError(f"line {lineno}: missing field {key!r}")
        if not isinstance(obj[key], types) or isinstance(obj[key], bool):
            raise CorpusFormatError(f"line {lineno}: field {key!r} has wrong type")
    sentiment_raw = obj.get("sentiment")
    if sentiment_raw not in _SENTIMENT_VALUES:
        raise CorpusFormatError(
            f"line {lineno}: sentiment must be \"pos\", \"neg\" or null"
        )
    flags = np.zeros(schema.count, dtype=bool)
    for name in obj["aspects"]:
        if not isinstance(name, str):
            raise CorpusFormatError(f"line {lineno}: aspect names must be strings")
        try:
            flags[schema.index_of(name)] = True
        except ValidationError:
            raise ValidationError(f"line {lineno}: unknown aspect name {name!r}") from None
    sentiment = _SENTIMENT_VALUES[sentiment_raw]
    if flags.any() != (sentiment is not None):
        raise ValidationError(
            f"line {lineno}: sentiment must be present iff at least one aspect is set"
        )
    return {
        "review_id": obj["review_id"],
        "ordinal": obj["ordinal"],
        "text": obj["text"],
        "flags": flags,
        "sentiment": sentiment,
    }


def load_corpus(path: str | Path, schema: AspectSchema, min_count: int = 1) -> Corpus:
    """Load a labeled corpus file (one JSON record per line).

    Raises :class:`CorpusFormatError` with the offending line number on
    parse problems and :class:`ValidationError` on label violations.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            records.append(_parse_corpus_line(obj, schema, lineno))

    token_lists = [tokenize(rec["text"]) for rec in records]
    vocab = build_vocabulary(token_lists, min_count=min_count)
    labeled = tuple(
        make_labeled(
            make_sentence(
                rec["text"],
                vocab,
                review_id=rec["review_id"],
                ordinal=rec["ordinal"],
                tokens=toks,
            ),
            rec["flags"],
            rec["sentiment"],
        )
        for rec, toks in zip(records, token_lists)
    )
    return Corpus(schema=schema, sentences=labeled, vocabulary=vocab)


def load_reviews(path: str | Path) -> list[tuple[str, str]]:
    """Read raw reviews (one JSON object per line with review_id and text)."""
    reviews = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or "review_id" not in obj or "text" not in obj:
                raise CorpusFormatError(f"line {lineno}: expected review_id and text fields")
            if not isinstance(obj["review_id"], str) or not isinstance(obj["text"], str):
                raise CorpusFormatError(f"line {lineno}: review_id and text must be strings")
            reviews.append((obj["review_id"], obj["text"]))
    return reviews


def corpus_stats(corpus: Corpus) -> dict[str, int]:
    """Sentence counts per aspect, plus "others" and "all".

    A sentence with several aspects increments each of them; "others"
    counts sentences with no aspect at all.
    """
    stats = {name: 0 for name in corpus.schema.names}
    others = 0
    for ls in corpus.sentences:
        if not ls.aspects.any():
            others += 1
            continue
        for name, flag in zip(corpus.schema.names, ls.aspects):
            if flag:
                stats[name] += 1
    stats["others"] = others
    stats["all"] = len(corpus.sentences)
    return stats
