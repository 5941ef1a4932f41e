"""Model assemblies and cascaded inference.

Two architectures share the same task structure (C aspect mappers plus one
sentiment classifier) and differ only in parameter sharing: the cascaded
model gives every task its own embedding matrix, the multitask model
shares a single embedding across all tasks.  Inference is gated: sentiment
is predicted only for sentences that fired at least one aspect, and a
sentence gets a single polarity even when several aspects fire.

Tasks are indexed 0..C-1 for the aspects (schema order) and C for the
sentiment classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .nn import ConvLayer, EmbeddingLayer, OutputHead, TaskNetwork, forward
from .text import AspectSchema, Sentence

DEFAULT_THRESHOLD = 0.5


@dataclass
class SentimentCall:
    positive: bool
    probability: float  # positive-sentiment probability

    @property
    def polarity(self) -> str:
        return "pos" if self.positive else "neg"


@dataclass
class ClassifiedSentence:
    """Model output for one sentence.

    ``sentiment`` is present exactly when at least one aspect flag is true.
    """

    sentence: Sentence | None
    aspect_flags: np.ndarray
    aspect_probabilities: np.ndarray
    sentiment: SentimentCall | None

    def __post_init__(self) -> None:
        if bool(self.aspect_flags.any()) != (self.sentiment is not None):
            raise ValidationError(
                "sentiment must be present iff at least one aspect flag is true"
            )


@dataclass
class CascadedCNN:
    """C independent aspect networks plus one sentiment network."""

    schema: AspectSchema
    aspect_nets: list[TaskNetwork]
    sentiment_net: TaskNetwork
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        if len(self.aspect_nets) != self.schema.count:
            raise ValidationError("need one aspect network per schema entry")
        nets = [*self.aspect_nets, self.sentiment_net]
        k = nets[0].embedding.k
        vocab = nets[0].embedding.vocab_size
        h = nets[0].conv.window
        for net in nets:
            if net.embedding.k != k or net.embedding.vocab_size != vocab:
                raise ValidationError("all embeddings must share k and vocabulary size")
            if net.conv.window != h:
                raise ValidationError("all networks must share the window size")

    @property
    def task_count(self) -> int:
        return self.schema.count + 1

    @property
    def radius(self) -> int:
        return self.sentiment_net.conv.radius

    def task_network(self, task: int) -> TaskNetwork:
        if task == self.schema.count:
            return self.sentiment_net
        return self.aspect_nets[task]

    def task_probability(self, task: int, padded_ids) -> float:
        net = self.task_network(task)
        p, _ = forward(padded_ids, net.embedding, net.conv, net.head)
        return p


@dataclass
class MultitaskCNN:
    """All C+1 tasks share one embedding; conv/head parts are per task."""

    schema: AspectSchema
    embedding: EmbeddingLayer
    parts: list[tuple[ConvLayer, OutputHead]]
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        if len(self.parts) != self.schema.count + 1:
            raise ValidationError("need C aspect parts plus one sentiment part")
        h = self.parts[0][0].window
        for conv, head in self.parts:
            if conv.window != h:
                raise ValidationError("all tasks must share the window size")
            if conv.weights.shape[0] != conv.window * self.embedding.k:
                raise ValidationError("conv filter rows must equal window * k")
            if head.weights.shape[0] != conv.filters:
                raise ValidationError("head width must equal the filter count")

    @property
    def task_count(self) -> int:
        return self.schema.count + 1

    @property
    def radius(self) -> int:
        return self.parts[0][0].radius

    def task_network(self, task: int) -> TaskNetwork:
        conv, head = self.parts[task]
        return TaskNetwork(self.embedding, conv, head)

    def task_probability(self, task: int, padded_ids) -> float:
        conv, head = self.parts[task]
        p, _ = forward(padded_ids, self.embedding, conv, head)
        return p


def predict_aspects(model, padded_ids):
    """Aspect probabilities and strict-threshold membership flags."""
    C = model.schema.count
    probs = np.array([model.task_probability(i, padded_ids) for i in range(C)])
    flags = probs > model.threshold
    return probs, flags


def predict_sentiment(model, padded_ids, aspect_flags) -> SentimentCall | None:
    """Positive/negative call, absent when no aspect flag is true."""
    if not np.any(aspect_flags):
        return None
    p = model.task_probability(model.schema.count, padded_ids)
    return SentimentCall(positive=p > model.threshold, probability=p)


def classify(model, padded_ids, sentence: Sentence | None = None) -> ClassifiedSentence:
    """Aspect mapping followed by gated sentiment prediction."""
    probs, flags = predict_aspects(model, padded_ids)
    call = predict_sentiment(model, padded_ids, flags)
    return ClassifiedSentence(
        sentence=sentence,
        aspect_flags=flags,
        aspect_probabilities=probs,
        sentiment=call,
    )
