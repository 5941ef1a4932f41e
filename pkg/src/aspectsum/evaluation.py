"""Precision/recall/F1 per aspect, sentiment accuracy, and k-fold
cross-validation.

Cross-validation trains on k-1 folds and scores the held-out fold.
Aspect metrics compare predicted membership flags against the gold flags
over every fold sentence.  Sentiment accuracy is computed over the gold
aspect-bearing sentences (those carrying a gold polarity), querying the
sentiment classifier directly so mapper mistakes cannot hide sentiment
mistakes.  F1 is computed per fold and the fold values are averaged, so
the reported mean F1 is generally not the harmonic mean of the reported
mean precision and recall.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .text import Corpus, encode


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValidationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def precision_recall_f1(c: ConfusionCounts) -> tuple[float, float, float]:
    """(P, R, F1) with the 0/0 convention mapping to 0."""
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def accuracy(correct: int, total: int) -> float:
    if total < 1:
        raise ValidationError("accuracy needs at least one example")
    return correct / total


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: np.ndarray  # sentence index -> fold id

    def indices_of(self, fold: int) -> np.ndarray:
        return np.nonzero(self.assignment == fold)[0]


def kfold_split(n: int, k: int, seed: int) -> FoldAssignment:
    """Seeded random partition into k folds whose sizes differ by at most 1."""
    if k < 2:
        raise ValidationError("need at least 2 folds")
    if n < k:
        raise ValidationError(f"cannot split {n} sentences into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    base = n // k
    extra = n % k
    pos = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        assignment[perm[pos : pos + size]] = fold
        pos += size
    return FoldAssignment(k=k, assignment=assignment)


@dataclass
class TaskResult:
    name: str
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    degenerate: list[str] = field(default_factory=list)


@dataclass
class SentimentResult:
    correct: int
    total: int
    accuracy: float
    degenerate: list[str] = field(default_factory=list)


@dataclass
class FoldResult:
    fold: int
    aspects: list[TaskResult]
    sentiment: SentimentResult


@dataclass
class EvalReport:
    schema_names: tuple[str, ...]
    folds: list[FoldResult]
    mean_precision: dict[str, float]
    mean_recall: dict[str, float]
    mean_f1: dict[str, float]
    mean_sentiment_accuracy: float

    def to_json_bytes(self) -> bytes:
        """Deterministic machine-readable emission at full precision."""
        doc = {
            "schema": list(self.schema_names),
            "folds": [
                {
                    "fold": fr.fold,
                    "aspects": [
                        {
                            "name": a.name,
                            "tp": a.counts.tp,
                            "fp": a.counts.fp,
                            "fn": a.counts.fn,
                            "tn": a.counts.tn,
                            "precision": a.precision,
                            "recall": a.recall,
                            "f1": a.f1,
                            "degenerate": a.degenerate,
                        }
                        for a in fr.aspects
                    ],
                    "sentiment": {
                        "correct": fr.sentiment.correct,
                        "total": fr.sentiment.total,
                        "accuracy": fr.sentiment.accuracy,
                        "degenerate": fr.sentiment.degenerate,
                    },
                }
                for fr in self.folds
            ],
            "means": {
                "precision": self.mean_precision,
                "recall": self.mean_recall,
                "f1": self.mean_f1,
                "sentiment_accuracy": self.mean_sentiment_accuracy,
            },
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")

    def format_text(self) -> str:
        """Human-readable table, percentages with one decimal."""
        lines = [f"{'aspect':<14}{'P':>7}{'R':>7}{'F1':>7}"]
        for name in self.schema_names:
            lines.append(
                f"{name:<14}"
                f"{100 * self.mean_precision[name]:>7.1f}"
                f"{100 * self.mean_recall[name]:>7.1f}"
                f"{100 * self.mean_f1[name]:>7.1f}"
            )
        lines.append(f"sentiment accuracy: {100 * self.mean_sentiment_accuracy:.1f}")
        degenerate = sorted(
            {
                flag
                for fr in self.folds
                for a in fr.aspects
                for flag in a.degenerate
            }
            | {flag for fr in self.folds for flag in fr.sentiment.degenerate}
        )
        if degenerate:
            lines.append("degenerate: " + "; ".join(degenerate))
        return "\n".join(lines) + "\n"


def predict_flags(predictor, padded_ids) -> np.ndarray:
    C = predictor.schema.count
    probs = np.array([predictor.task_probability(t, padded_ids) for t in range(C)])
    return probs > predictor.threshold


def evaluate_fold(predictor, corpus: Corpus, test_indices, train_indices) -> tuple[list[TaskResult], SentimentResult]:
    """Score one held-out fold against gold labels."""
    C = corpus.schema.count
    r = predictor.radius
    encoded = {}
    for i in test_indices:
        s = corpus.sentences[i].sentence
        encoded[i] = encode(s, corpus.vocabulary, r) if s.length else None

    counts = [[0, 0, 0, 0] for _ in range(C)]  # tp, fp, fn, tn
    for i in test_indices:
        ls = corpus.sentences[i]
        if encoded[i] is None:
            flags = np.zeros(C, dtype=bool)
        else:
            flags = predict_flags(predictor, encoded[i])
        for t in range(C):
            gold = bool(ls.aspects[t])
            pred = bool(flags[t])
            if pred and gold:
                counts[t][0] += 1
            elif pred:
                counts[t][1] += 1
            elif gold:
                counts[t][2] += 1
            else:
                counts[t][3] += 1

    train_positives = [0] * C
    for i in train_indices:
        for t in range(C):
            if corpus.sentences[i].aspects[t]:
                train_positives[t] += 1

    aspect_results = []
    for t in range(C):
        c = ConfusionCounts(*counts[t])
        p, rec, f1 = precision_recall_f1(c)
        degenerate = []
        if train_positives[t] == 0:
            degenerate.append(f"{corpus.schema.names[t]}: no positive training sentences")
        if c.tp + c.fn == 0:
            degenerate.append(f"{corpus.schema.names[t]}: no positive test sentences")
        if c.tp + c.fp == 0:
            degenerate.append(f"{corpus.schema.names[t]}: no predicted positives")
        aspect_results.append(
            TaskResult(corpus.schema.names[t], c, p, rec, f1, degenerate)
        )

    correct = total = 0
    degenerate_s: list[str] = []
    for i in test_indices:
        ls = corpus.sentences[i]
        if ls.sentiment is None:
            continue
        total += 1
        if encoded[i] is None:
            degenerate_s.append("empty sentence counted incorrect")
            continue
        pred_pos = predictor.task_probability(C, encoded[i]) > predictor.threshold
        if pred_pos == ls.sentiment:
            correct += 1
    if total == 0:
        degenerate_s.append("no sentiment-labeled test sentences")
        acc = 0.0
    else:
        acc = accuracy(correct, total)
    return aspect_results, SentimentResult(correct, total, acc, degenerate_s)


def cross_validate(trainer, corpus: Corpus, k: int = 5, seed: int = 0) -> EvalReport:
    """Train/evaluate over k folds and average the per-fold metrics.

    ``trainer(corpus, train_indices, fold_seed)`` must return a predictor
    exposing ``schema``, ``threshold``, ``radius`` and
    ``task_probability``.
    """
    n = len(corpus)
    assignment = kfold_split(n, k, seed)
    fold_seeds = [
        int(s.generate_state(1)[0])
        for s in np.random.SeedSequence(seed).spawn(k)
    ]
    folds = []
    for fold in range(k):
        test_idx = assignment.indices_of(fold).tolist()
        train_idx = [i for i in range(n) if assignment.assignment[i] != fold]
        predictor = trainer(corpus, train_idx, fold_seeds[fold])
        aspects, sentiment = evaluate_fold(predictor, corpus, test_idx, train_idx)
        folds.append(FoldResult(fold=fold, aspects=aspects, sentiment=sentiment))

    names = corpus.schema.names
    mean_p = {nm: float(np.mean([f.aspects[t].precision for f in folds]))
              for t, nm in enumerate(names)}
    mean_r = {nm: float(np.mean([f.aspects[t].recall for f in folds]))
              for t, nm in enumerate(names)}
    mean_f1 = {nm: float(np.mean([f.aspects[t].f1 for f in folds]))
               for t, nm in enumerate(names)}
    mean_acc = float(np.mean([f.sentiment.accuracy for f in folds]))
    return EvalReport(
        schema_names=names,
        folds=folds,
        mean_precision=mean_p,
        mean_recall=mean_r,
        mean_f1=mean_f1,
        mean_sentiment_accuracy=mean_acc,
    )
