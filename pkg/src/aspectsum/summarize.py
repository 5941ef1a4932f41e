"""Opinion aggregation and report rendering.

Counts positive/negative sentences per aspect across a batch of
classified sentences, keeping a reference to every contributing sentence.
A sentence that fired several aspects is tallied once under each of them,
always with its single shared polarity.  Reports render to deterministic
JSON (stable key order, sentences sorted by review id then ordinal) and
to a self-contained static HTML page whose per-aspect counts link to the
listed sentences.
"""

from __future__ import annotations

import html
import json
from dataclasses import dataclass

from .errors import ValidationError
from .models import ClassifiedSentence, classify
from .text import AspectSchema, Vocabulary, encode, make_sentence, segment_review


@dataclass(frozen=True)
class SentenceRef:
    review_id: str
    ordinal: int
    text: str
    polarity: str  # "pos" | "neg"
    probability: float  # positive-sentiment probability


@dataclass
class AspectSummary:
    aspect: str
    positive_count: int
    negative_count: int
    sentences: list[SentenceRef]


@dataclass
class SummaryReport:
    schema: AspectSchema
    summaries: list[AspectSummary]
    processed: int  # sentences seen
    mapped: int  # sentences with at least one aspect


def aggregate(classified: list[ClassifiedSentence], schema: AspectSchema) -> SummaryReport:
    """Tally polarities per aspect over classified sentences."""
    buckets: list[list[SentenceRef]] = [[] for _ in schema.names]
    mapped = 0
    for cs in classified:
        has_aspect = bool(cs.aspect_flags.any())
        if has_aspect != (cs.sentiment is not None):
            raise ValidationError(
                "gating violated: sentiment must be present iff an aspect fired"
            )
        if not has_aspect:
            continue
        mapped += 1
        ref = SentenceRef(
            review_id=cs.sentence.review_id if cs.sentence else "",
            ordinal=cs.sentence.ordinal if cs.sentence else 0,
            text=cs.sentence.raw if cs.sentence else "",
            polarity=cs.sentiment.polarity,
            probability=cs.sentiment.probability,
        )
        for t, fired in enumerate(cs.aspect_flags):
            if fired:
                buckets[t].append(ref)
    summaries = []
    for name, refs in zip(schema.names, buckets):
        refs.sort(key=lambda r: (r.review_id, r.ordinal))
        pos = sum(1 for r in refs if r.polarity == "pos")
        summaries.append(
            AspectSummary(
                aspect=name,
                positive_count=pos,
                negative_count=len(refs) - pos,
                sentences=refs,
            )
        )
    return SummaryReport(
        schema=schema, summaries=summaries, processed=len(classified), mapped=mapped
    )


def emit_json(report: SummaryReport) -> bytes:
    doc = {
        "schema": list(report.schema.names),
        "totals": {"processed": report.processed, "mapped": report.mapped},
        "aspects": [
            {
                "aspect": s.aspect,
                "positive": s.positive_count,
                "negative": s.negative_count,
                "sentences": [
                    {
                        "review_id": r.review_id,
                        "ordinal": r.ordinal,
                        "text": r.text,
                        "polarity": r.polarity,
                        "probability": r.probability,
                    }
                    for r in s.sentences
                ],
            }
            for s in report.summaries
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def report_from_json(data: bytes) -> SummaryReport:
    doc = json.loads(data.decode("utf-8"))
    schema = AspectSchema(names=tuple(doc["schema"]))
    summaries = [
        AspectSummary(
            aspect=a["aspect"],
            positive_count=a["positive"],
            negative_count=a["negative"],
            sentences=[
                SentenceRef(
                    review_id=r["review_id"],
                    ordinal=r["ordinal"],
                    text=r["text"],
                    polarity=r["polarity"],
                    probability=r["probability"],
                )
                for r in a["sentences"]
            ],
        )
        for a in doc["aspects"]
    ]
    return SummaryReport(
        schema=schema,
        summaries=summaries,
        processed=doc["totals"]["processed"],
        mapped=doc["totals"]["mapped"],
    )


def emit_html(report: SummaryReport) -> bytes:
    """Static page: per-aspect counts linking to the quoted sentences."""
    parts = [
        "<!DOCTYPE html>",
        "<html><head><meta charset='utf-8'><title>Opinion summary</title>",
        "<style>body{font-family:sans-serif;max-width:50em;margin:2em auto}"
        "li{margin:.2em 0}.pos{color:#166d16}.neg{color:#a11515}</style>",
        "</head><body>",
        "<h1>Opinion summary</h1>",
        f"<p>{report.processed} sentences processed, "
        f"{report.mapped} mapped to at least one aspect.</p>",
    ]
    for i, s in enumerate(report.summaries):
        name = html.escape(s.aspect)
        parts.append(f"<h2 id='aspect-{i}'>{name}</h2>")
        parts.append(
            f"<p><a href='#sent-{i}' class='pos'>{s.positive_count} positive</a>, "
            f"<a href='#sent-{i}' class='neg'>{s.negative_count} negative</a></p>"
        )
        parts.append(f"<ul id='sent-{i}'>")
        for r in s.sentences:
            cls = "pos" if r.polarity == "pos" else "neg"
            parts.append(
                f"<li class='{cls}'>[{html.escape(r.review_id)}:{r.ordinal}] "
                f"{html.escape(r.text)}</li>"
            )
        parts.append("</ul>")
    parts.append("</body></html>")
    return "\n".join(parts).encode("utf-8")


def summarize_reviews(predictor, vocabulary: Vocabulary, reviews) -> SummaryReport:
    """Full pipeline: segment, tokenize, classify, aggregate.

    ``reviews`` is an iterable of (review_id, text).  Sentences whose
    tokenization is empty are counted as processed but are not classified
    (they can carry no aspect).
    """
    classified = []
    empty = 0
    for review_id, text in reviews:
        for ordinal, s_text in enumerate(segment_review(text)):
            sentence = make_sentence(s_text, vocabulary, review_id, ordinal)
            if sentence.length == 0:
                empty += 1
                continue
            ids = encode(sentence, vocabulary, predictor.radius)
            classified.append(classify(predictor, ids, sentence))
    report = aggregate(classified, predictor.schema)
    report.processed += empty
    return report
