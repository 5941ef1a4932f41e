"""Numerical core: embedding lookup, windowed convolution with rectifier
activation, max-over-time pooling, logistic output head, exact
backpropagation, and a finite-difference gradient checker.

One task network classifies a sentence into a single binary decision: the
padded id sequence is embedded column by column, every window of ``h``
consecutive embedded words is scored by ``m`` rectified filters, each
feature map is reduced to its maximum over time, and the pooled vector
feeds a logistic unit.  All arithmetic is double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import BACKEND, kernels
from .errors import EmptySentenceError, ValidationError

__all__ = [
    "BACKEND",
    "EmbeddingLayer",
    "ConvLayer",
    "OutputHead",
    "TaskNetwork",
    "ForwardTrace",
    "TaskGradients",
    "embed",
    "convolve",
    "max_over_time",
    "head_forward",
    "forward",
    "backward",
    "finite_difference_check",
    "gradient_check_suite",
    "sigmoid",
]


def sigmoid(z: float) -> float:
    return kernels.sigmoid(float(z))


def _require_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")


@dataclass
class EmbeddingLayer:
    """Dense word vectors: column ``i`` embeds vocabulary id ``i``."""

    weights: np.ndarray  # k x |D|

    def __post_init__(self) -> None:
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValidationError("embedding weights must be 2-D")
        _require_finite("embedding weights", self.weights)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "EmbeddingLayer":
        return EmbeddingLayer(self.weights.copy())


@dataclass
class ConvLayer:
    """``m`` filters over windows of ``window`` consecutive words."""

    weights: np.ndarray  # (window*k) x m, one filter per column
    bias: np.ndarray  # m
    window: int

    def __post_init__(self) -> None:
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.window < 1 or self.window % 2 == 0:
            raise ValidationError(f"window size must be odd and >= 1, got {self.window}")
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValidationError("conv weights must be 2-D and bias 1-D")
        if self.weights.shape[1] != self.bias.shape[0]:
            raise ValidationError("conv bias length must equal the filter count")
        if self.weights.shape[1] < 1:
            raise ValidationError("need at least one filter")
        if self.weights.shape[0] % self.window != 0:
            raise ValidationError("filter rows must be window * k")
        _require_finite("conv weights", self.weights)
        _require_finite("conv bias", self.bias)

    @property
    def filters(self) -> int:
        return self.weights.shape[1]

    @property
    def radius(self) -> int:
        return self.window // 2

    def copy(self) -> "ConvLayer":
        return ConvLayer(self.weights.copy(), self.bias.copy(), self.window)


@dataclass
class OutputHead:
    """Binary logistic unit over the pooled feature vector."""

    weights: np.ndarray  # m
    bias: np.ndarray = field(default_factory=lambda: np.zeros(()))  # scalar

    def __post_init__(self) -> None:
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(())
        if self.weights.ndim != 1:
            raise ValidationError("head weights must be 1-D")
        _require_finite("head weights", self.weights)
        _require_finite("head bias", self.bias)

    def copy(self) -> "OutputHead":
        return OutputHead(self.weights.copy(), self.bias.copy())


@dataclass
class TaskNetwork:
    """One binary classifier: embedding + convolution/pooling + head."""

    embedding: EmbeddingLayer
    conv: ConvLayer
    head: OutputHead

    def __post_init__(self) -> None:
        if self.conv.weights.shape[0] != self.conv.window * self.embedding.k:
            raise ValidationError("conv filter rows must equal window * embedding dim")
        if self.head.weights.shape[0] != self.conv.filters:
            raise ValidationError("head width must equal the filter count")

    def copy(self) -> "TaskNetwork":
        return TaskNetwork(self.embedding.copy(), self.conv.copy(), self.head.copy())


@dataclass
class ForwardTrace:
    """Every intermediate value the backward pass needs."""

    padded_ids: np.ndarray
    embedded: np.ndarray  # k x (l + 2r)
    preactivations: np.ndarray  # m x l
    feature_maps: np.ndarray  # m x l
    argmax: np.ndarray  # m, smallest maximizing time index per map
    pooled: np.ndarray  # m
    logit: float
    probability: float


@dataclass
class TaskGradients:
    """Loss gradients, shaped like their parameters.

    ``embedding`` is sparse: it maps each touched vocabulary id to the
    gradient of its column; untouched columns have zero gradient.
    """

    embedding: dict[int, np.ndarray]
    conv_weights: np.ndarray
    conv_bias: np.ndarray
    head_weights: np.ndarray
    head_bias: float


def _as_ids(padded_ids) -> np.ndarray:
    return np.ascontiguousarray(padded_ids, dtype=np.int64)


def embed(padded_ids, layer: EmbeddingLayer) -> np.ndarray:
    """Column ``t`` of the result is column ``padded_ids[t]`` of the weights."""
    ids = _as_ids(padded_ids)
    if ids.size and (ids.min() < 0 or ids.max() >= layer.vocab_size):
        raise IndexError("token id out of range for the embedding layer")
    return kernels.embed_columns(layer.weights, ids)


def convolve(embedded: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Rectified feature maps, one row per filter, one column per word."""
    embedded = np.ascontiguousarray(embedded, dtype=np.float64)
    if embedded.shape[1] < layer.window:
        raise EmptySentenceError(
            "sentence has no convolution windows; it must contain at least one word"
        )
    _, fmap = kernels.conv_forward(embedded, layer.weights, layer.bias)
    return fmap


def max_over_time(maps: np.ndarray):
    """Maximum per feature map plus the smallest attaining time index."""
    maps = np.ascontiguousarray(maps, dtype=np.float64)
    if maps.ndim != 2 or maps.shape[1] < 1:
        raise EmptySentenceError("feature maps must have at least one time step")
    return kernels.pool_max(maps)


def head_forward(pooled: np.ndarray, head: OutputHead) -> float:
    pooled = np.ascontiguousarray(pooled, dtype=np.float64)
    _, p = kernels.head_logit(pooled, head.weights, float(head.bias))
    return p


def forward(padded_ids, embedding: EmbeddingLayer, conv: ConvLayer, head: OutputHead):
    """Full forward pass; returns the probability and a reusable trace."""
    ids = _as_ids(padded_ids)
    if ids.size < conv.window:
        raise EmptySentenceError(
            "sentence has no convolution windows; it must contain at least one word"
        )
    if ids.size and (ids.min() < 0 or ids.max() >= embedding.vocab_size):
        raise IndexError("token id out of range for the embedding layer")
    E, pre, fmap, amax, pooled, z, p = kernels.forward_example(
        embedding.weights, conv.weights, conv.bias, head.weights, float(head.bias), ids
    )
    trace = ForwardTrace(
        padded_ids=ids,
        embedded=E,
        preactivations=pre,
        feature_maps=fmap,
        argmax=amax,
        pooled=pooled,
        logit=z,
        probability=p,
    )
    return p, trace


def forward_network(net: TaskNetwork, padded_ids):
    return forward(padded_ids, net.embedding, net.conv, net.head)


def backward(
    trace: ForwardTrace,
    label: float,
    embedding: EmbeddingLayer,
    conv: ConvLayer,
    head: OutputHead,
) -> TaskGradients:
    """Exact gradients of the per-example logistic loss.

    Pooling routes gradient only to each map's stored argmax window; the
    rectifier gate passes gradient only where the pre-activation is
    strictly positive.
    """
    m = conv.filters
    if (
        trace.embedded.shape[0] != embedding.k
        or trace.preactivations.shape[0] != m
        or trace.pooled.shape[0] != m
        or conv.weights.shape[0] != conv.window * embedding.k
        or head.weights.shape[0] != m
    ):
        raise ValidationError("trace does not match the current parameter shapes")
    y = float(label)
    dE, dW2, db2, dw3, db3 = kernels.backward_example(
        embedding.weights,
        conv.weights,
        head.weights,
        trace.padded_ids,
        trace.preactivations,
        trace.argmax,
        trace.pooled,
        trace.probability,
        y,
    )
    dlogit = trace.probability - y
    gate = trace.preactivations[np.arange(m), trace.argmax] > 0.0
    coef = np.where(gate, dlogit * head.weights, 0.0)
    positions = _touched_positions(trace.padded_ids.size, trace.argmax, coef, conv.window)
    sparse = _sparse_embedding_grad(dE, trace.padded_ids, positions)
    return TaskGradients(
        embedding=sparse,
        conv_weights=dW2,
        conv_bias=db2,
        head_weights=dw3,
        head_bias=float(db3),
    )


def _touched_positions(n: int, amax, coef, h: int) -> np.ndarray:
    touched = np.zeros(n, dtype=bool)
    for j in np.nonzero(coef)[0]:
        touched[amax[j] : amax[j] + h] = True
    return np.nonzero(touched)[0]


def _sparse_embedding_grad(dE, ids, positions) -> dict[int, np.ndarray]:
    grads: dict[int, np.ndarray] = {}
    for t in positions:
        col = int(ids[t])
        g = grads.get(col)
        if g is None:
            grads[col] = dE[:, t].copy()
        else:
            g += dE[:, t]
    return grads


def example_loss(probability: float, label: float) -> float:
    return kernels.example_loss(float(probability), float(label))


def finite_difference_check(
    embedding: EmbeddingLayer,
    conv: ConvLayer,
    head: OutputHead,
    example: tuple,
    eps: float = 1e-5,
) -> float:
    """Max relative disagreement between analytic and central-difference
    gradients over every parameter, with denominator
    ``max(|analytic|, |numeric|, 1e-8)``."""
    if eps <= 0:
        raise ValidationError("eps must be positive")
    padded_ids, label = example
    ids = _as_ids(padded_ids)
    y = float(label)

    def loss_at() -> float:
        p, _ = forward(ids, embedding, conv, head)
        return example_loss(p, y)

    _, trace = forward(ids, embedding, conv, head)
    grads = backward(trace, y, embedding, conv, head)

    analytic = {}
    for col in range(embedding.vocab_size):
        vec = grads.embedding.get(col)
        for row in range(embedding.k):
            analytic[("W1", row, col)] = 0.0 if vec is None else float(vec[row])
    tensors = {
        "W2": (conv.weights, grads.conv_weights),
        "b2": (conv.bias, grads.conv_bias),
        "w3": (head.weights, grads.head_weights),
    }
    for name, (param, grad) in tensors.items():
        for pos in np.ndindex(param.shape):
            analytic[(name, *pos)] = float(grad[pos])
    analytic[("b3",)] = grads.head_bias

    params = {"W1": embedding.weights, "W2": conv.weights, "b2": conv.bias,
              "w3": head.weights, "b3": head.bias}
    worst = 0.0
    for key, ga in analytic.items():
        tensor = params[key[0]]
        pos = key[1:]
        orig = tensor[pos] if pos else float(tensor)
        if pos:
            tensor[pos] = orig + eps
            up = loss_at()
            tensor[pos] = orig - eps
            down = loss_at()
            tensor[pos] = orig
        else:
            tensor[...] = orig + eps
            up = loss_at()
            tensor[...] = orig - eps
            down = loss_at()
            tensor[...] = orig
        gn = (up - down) / (2.0 * eps)
        err = abs(ga - gn) / max(abs(ga), abs(gn), 1e-8)
        worst = max(worst, err)
    return worst


def random_network(
    rng: np.random.Generator,
    k: int,
    vocab_size: int,
    m: int,
    h: int = 3,
    scale: float = 0.5,
) -> TaskNetwork:
    """Random task network for checks and property tests."""
    return TaskNetwork(
        EmbeddingLayer(rng.normal(0.0, scale, (k, vocab_size))),
        ConvLayer(rng.normal(0.0, scale, (h * k, m)), rng.normal(0.0, scale, m), h),
        OutputHead(rng.normal(0.0, scale, m), rng.normal(0.0, scale)),
    )


def gradient_check_suite(
    count: int = 100,
    seed: int = 0,
    eps: float = 1e-5,
    max_k: int = 8,
    max_len: int = 10,
    max_filters: int = 6,
) -> float:
    """Run ``count`` random networks through the finite-difference check
    and return the worst relative error seen."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        k = int(rng.integers(2, max_k + 1))
        vocab = int(rng.integers(4, 16))
        m = int(rng.integers(1, max_filters + 1))
        length = int(rng.integers(1, max_len + 1))
        h = 3
        net = random_network(rng, k, vocab, m, h)
        r = h // 2
        ids = np.concatenate(
            [np.zeros(r, np.int64), rng.integers(0, vocab, length), np.zeros(r, np.int64)]
        )
        label = float(rng.integers(0, 2))
        err = finite_difference_check(net.embedding, net.conv, net.head, (ids, label), eps)
        worst = max(worst, err)
    return worst
