"""Bag-of-words linear-SVM baseline, cascaded like the CNN pipeline.

Features are term presence: a sparse binary vector with one active entry
per distinct in-vocabulary token (out-of-vocabulary tokens collapse onto
UNK).  Each task is an L2-regularized squared-hinge linear SVM trained by
seeded stochastic subgradient descent with tail-averaged iterates; the
cascade gates sentiment on the aspect decisions exactly like the CNN
models, with margins squashed through a logistic so the shared
classification code can compare probabilities against 0.5 (margin 0 maps
to 0.5 and therefore to the negative class).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .nn import sigmoid
from .text import AspectSchema, Sentence, Vocabulary

PAD_ID = 0


@dataclass(frozen=True)
class SparseBinaryVector:
    """Sorted ids of the distinct vocabulary tokens present in a sentence."""

    active: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.active, self.active[1:])):
            raise ValidationError("active ids must be strictly increasing")
        if any(i == PAD_ID for i in self.active):
            raise ValidationError("PAD can never be an active feature")


def term_presence(sentence: Sentence, vocab: Vocabulary) -> SparseBinaryVector:
    """1/0 presence features; duplicated tokens collapse."""
    ids = {vocab.id_of(t) for t in sentence.tokens}
    ids.discard(vocab.pad_id)
    return SparseBinaryVector(active=tuple(sorted(ids)))


def presence_from_ids(ids) -> SparseBinaryVector:
    distinct = {int(i) for i in ids}
    distinct.discard(PAD_ID)
    return SparseBinaryVector(active=tuple(sorted(distinct)))


@dataclass
class LinearModel:
    weights: np.ndarray  # dense |D| vector
    bias: float
    reg_c: float

    def __post_init__(self) -> None:
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ValidationError("linear model has non-finite entries")


def margin_of(model: LinearModel, x: SparseBinaryVector) -> float:
    active = list(x.active)
    return float(model.weights[active].sum()) + model.bias if active else model.bias


def predict_linear(model: LinearModel, x: SparseBinaryVector) -> tuple[int, float]:
    """(+1 or -1, margin); a margin of exactly 0 predicts -1."""
    margin = margin_of(model, x)
    return (1 if margin > 0.0 else -1), margin


def squared_hinge_objective(model: LinearModel, data) -> float:
    """0.5*||w||^2 + reg_c * sum of squared hinge losses."""
    total = 0.5 * float(model.weights @ model.weights)
    for x, y in data:
        slack = max(0.0, 1.0 - y * margin_of(model, x))
        total += model.reg_c * slack * slack
    return total


def train_linear_svm(
    data: list[tuple[SparseBinaryVector, int]],
    dim: int,
    reg_c: float = 1.0,
    epochs: int = 20,
    seed: int = 0,
) -> LinearModel:
    """Approximately minimize the squared-hinge primal objective.

    Stochastic subgradient descent over per-epoch permutations with step
    size 1/(lambda*t) and averaging over the second half of the steps;
    the bias rides along as an unregularized extra coordinate.
    Deterministic for a fixed seed.
    """
    if not data:
        raise ValidationError("training data is empty")
    labels = {y for _, y in data}
    if labels != {-1, 1}:
        raise ValidationError("need both classes (+1 and -1) in the training data")
    if reg_c <= 0:
        raise ValidationError("reg_c must be positive")
    n = len(data)
    lam = 1.0 / (n * reg_c)
    rng = np.random.default_rng(seed)
    w = np.zeros(dim)
    b = 0.0
    w_avg = np.zeros(dim)
    b_avg = 0.0
    averaged = 0
    total_steps = n * epochs
    # Shifting the 1/(lam*t) schedule tames the first steps: the squared
    # hinge has unbounded subgradients, so unshifted steps can blow up.
    t0 = 2 * n
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            x, y = data[i]
            eta = 1.0 / (lam * (t + t0))
            active = list(x.active)
            margin = (w[active].sum() if active else 0.0) + b
            slack = 1.0 - y * margin
            w *= 1.0 - eta * lam
            if slack > 0.0:
                step = eta * 2.0 * slack * y
                if active:
                    w[active] += step
                # The bias is unregularized; give it the 1/t-decayed step so
                # it cannot ride the large early weight steps.
                b += 2.0 * slack * y / (t + t0)
            if 2 * t > total_steps:
                w_avg += w
                b_avg += b
                averaged += 1
    if averaged:
        w = w_avg / averaged
        b = b_avg / averaged
    return LinearModel(weights=w, bias=float(b), reg_c=reg_c)


@dataclass
class CascadedSVM:
    """C aspect SVMs plus one gated sentiment SVM over presence features."""

    schema: AspectSchema
    vocabulary: Vocabulary
    aspect_models: list[LinearModel]
    sentiment_model: LinearModel
    threshold: float = 0.5
    reg_c: float = 1.0
    degenerate_tasks: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(self.aspect_models) != self.schema.count:
            raise ValidationError("need one aspect model per schema entry")

    # Term-presence features need no convolution padding.
    @property
    def radius(self) -> int:
        return 0

    @property
    def task_count(self) -> int:
        return self.schema.count + 1

    def task_probability(self, task: int, padded_ids) -> float:
        model = (
            self.sentiment_model
            if task == self.schema.count
            else self.aspect_models[task]
        )
        return sigmoid(margin_of(model, presence_from_ids(padded_ids)))


def train_cascaded_svm(
    corpus,
    train_indices=None,
    reg_c: float = 1.0,
    epochs: int = 20,
    seed: int = 0,
) -> CascadedSVM:
    """Train the full cascade on a corpus split.

    A task whose training labels are single-class cannot be fit; it gets a
    constant negative model and is reported in ``degenerate_tasks``.
    """
    idx = list(range(len(corpus))) if train_indices is None else list(train_indices)
    if not idx:
        raise ValidationError("empty training split")
    vocab = corpus.vocabulary
    feats = {i: term_presence(corpus.sentences[i].sentence, vocab) for i in idx}
    degenerate: list[int] = []

    def fit(pairs, task: int) -> LinearModel:
        labels = {y for _, y in pairs}
        if labels != {-1, 1}:
            degenerate.append(task)
            return LinearModel(np.zeros(vocab.size), -1.0, reg_c)
        return train_linear_svm(pairs, vocab.size, reg_c, epochs, seed + task)

    aspect_models = []
    for t in range(corpus.schema.count):
        pairs = [
            (feats[i], 1 if corpus.sentences[i].aspects[t] else -1) for i in idx
        ]
        aspect_models.append(fit(pairs, t))
    sent_pairs = [
        (feats[i], 1 if corpus.sentences[i].sentiment else -1)
        for i in idx
        if corpus.sentences[i].aspects.any()
    ]
    if not sent_pairs:
        raise ValidationError("no aspect-bearing sentences to train the sentiment task")
    sentiment_model = fit(sent_pairs, corpus.schema.count)
    return CascadedSVM(
        schema=corpus.schema, vocabulary=vocab, aspect_models=aspect_models,
        sentiment_model=sentiment_model, reg_c=reg_c,
        degenerate_tasks=tuple(degenerate),
    )
