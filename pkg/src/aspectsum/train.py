"""Training: losses, SGD with momentum, initialization, the multitask
training loop, pre-trained vector loading and model serialization.

The multitask trainer runs one full training pass per task: task ``i`` is
made the main task and every other task contributes as a weighted
auxiliary.  Within each mini-batch the main task's parameters (shared
embedding plus its own conv/head) are updated first, then each auxiliary
task recomputes its gradients against the updated embedding and applies
its own update, scaled by that task's weight.  Sentiment gradients are
averaged over the aspect-bearing members of the batch only; a batch with
none contributes no update at all.
"""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend import kernels
from .baseline import CascadedSVM, LinearModel
from .errors import ConfigError, CorpusFormatError, ModelFormatError, ValidationError
from .models import CascadedCNN, MultitaskCNN
from .nn import ConvLayer, EmbeddingLayer, OutputHead, TaskNetwork
from .text import AspectSchema, Corpus, Vocabulary, encode


# ---------------------------------------------------------------------------
# Hyperparameters
# ---------------------------------------------------------------------------


@dataclass
class Hyperparams:
    """Training configuration.

    Defaults: 30-dimensional embeddings, window 3, 300 filters per aspect
    mapper and 100 for the sentiment classifier, batches of 1000 (clamped
    to the dataset), learning rate 0.5, momentum 0.9, Gaussian init with
    std 0.1, auxiliary task weight 0.1.
    """

    k: int = 30
    h: int = 3
    m_aspect: int = 300
    m_sentiment: int = 100
    batch_size: int = 1000
    learning_rate: float = 0.5
    momentum: float = 0.9
    init_std: float = 0.1
    epochs: int = 50
    lambdas: float | tuple[float, ...] = 0.1
    threshold: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.h < 1 or self.h % 2 == 0:
            raise ConfigError("window size h must be odd and >= 1")
        if self.m_aspect < 1 or self.m_sentiment < 1:
            raise ConfigError("filter counts must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.init_std <= 0:
            raise ConfigError("init std must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        for lam in np.atleast_1d(np.asarray(self.lambdas, dtype=np.float64)):
            if not 0 < lam < 1:
                raise ConfigError("every auxiliary weight must lie in (0, 1)")

    def resolve_lambdas(self, n_tasks: int) -> np.ndarray:
        """Per-task auxiliary weights, broadcasting a scalar.

        A weight of exactly 0 disables that auxiliary task (used by
        single-task reduction tests); normal configuration requires
        weights strictly inside (0, 1), which :meth:`validate` enforces.
        """
        lams = np.atleast_1d(np.asarray(self.lambdas, dtype=np.float64))
        if lams.size == 1:
            lams = np.full(n_tasks, float(lams[0]))
        if lams.size != n_tasks:
            raise ConfigError(
                f"need one auxiliary weight per task ({n_tasks}), got {lams.size}"
            )
        for lam in lams:
            if not 0 <= lam < 1:
                raise ConfigError("auxiliary weights must lie in [0, 1)")
        return lams


# ---------------------------------------------------------------------------
# Losses and optimizer
# ---------------------------------------------------------------------------


def logistic_loss(probability: float, label: float) -> float:
    """Negative Bernoulli log-likelihood of one prediction."""
    a = float(probability)
    y = float(label)
    if not 0.0 < a < 1.0:
        raise ValidationError("probability must lie strictly inside (0, 1)")
    if y not in (0.0, 1.0):
        raise ValidationError("label must be 0 or 1")
    return -(y * math.log(a) + (1.0 - y) * math.log(1.0 - a))


def multitask_objective(main_loss: float, aux_losses, lambdas) -> float:
    """Main-task loss plus the weighted sum of auxiliary losses."""
    aux = list(aux_losses)
    lams = list(lambdas)
    if len(aux) != len(lams):
        raise ConfigError("need exactly one weight per auxiliary loss")
    for lam in lams:
        if not 0.0 < lam < 1.0:
            raise ConfigError("auxiliary weights must lie in (0, 1)")
    return float(main_loss) + sum(l * w for l, w in zip(aux, lams))


@dataclass
class OptimizerState:
    """Velocity buffer per parameter tensor; fresh for every training run."""

    velocity: dict[str, np.ndarray] = field(default_factory=dict)


def sgd_momentum_step(params: dict, grads: dict, state: OptimizerState,
                      learning_rate: float, momentum: float):
    """Classical momentum: v <- mu*v - lr*g, theta <- theta + v, in place."""
    for name, g in grads.items():
        theta = params[name]
        g = np.asarray(g, dtype=np.float64)
        if g.shape != theta.shape:
            raise ValidationError(f"gradient shape mismatch for {name!r}")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(theta)
            state.velocity[name] = v
        v *= momentum
        v -= learning_rate * g
        theta += v
    return params, state


# ---------------------------------------------------------------------------
# Initialization and pre-trained vectors
# ---------------------------------------------------------------------------


def init_weights(shape, rng: np.random.Generator, std: float) -> np.ndarray:
    """i.i.d. zero-mean Gaussian weights; biases are created as zeros elsewhere."""
    if std <= 0:
        raise ConfigError("init std must be positive")
    return rng.normal(0.0, std, shape)


def _init_part(k: int, m: int, h: int, rng, std: float):
    conv = ConvLayer(init_weights((h * k, m), rng, std), np.zeros(m), h)
    head = OutputHead(init_weights(m, rng, std), np.zeros(()))
    return conv, head


def _init_embedding(k, vocab_size, rng, std, pretrained: EmbeddingLayer | None):
    if pretrained is not None:
        if pretrained.k != k or pretrained.vocab_size != vocab_size:
            raise ConfigError("pre-trained embedding shape does not match configuration")
        return pretrained.copy()
    return EmbeddingLayer(init_weights((k, vocab_size), rng, std))


@dataclass
class CoverageReport:
    covered: int
    missing: int
    missing_tokens: tuple[str, ...]


def load_pretrained_embeddings(
    path: str | Path,
    vocab: Vocabulary,
    k: int,
    fallback_std: float = 0.1,
    seed: int = 0,
) -> tuple[EmbeddingLayer, CoverageReport]:
    """Initialize an embedding layer from a word-vector text file.

    The file starts with a ``count dim`` header followed by one line per
    word (token then ``dim`` floats).  Vocabulary words found in the file
    get the stored vector; everything else, including the PAD and UNK
    pseudo-tokens, gets a random zero-mean Gaussian column.  All columns
    remain trainable.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise CorpusFormatError(f"{path}: empty vector file")
    header = lines[0].split()
    if len(header) != 2:
        raise CorpusFormatError(f"{path}: header must be 'count dim'")
    try:
        count, dim = int(header[0]), int(header[1])
    except ValueError:
        raise CorpusFormatError(f"{path}: header must be 'count dim'") from None
    if dim != k:
        raise ConfigError(
            f"vector file dimension {dim} does not match configured k={k}"
        )
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != count:
        raise CorpusFormatError(
            f"{path}: header declares {count} vectors but body has {len(body)}"
        )
    table: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(body, start=2):
        fields = line.rstrip().split(" ")
        if len(fields) != dim + 1:
            raise CorpusFormatError(
                f"{path}: line {lineno}: expected a token and {dim} values"
            )
        try:
            table[fields[0]] = np.array([float(x) for x in fields[1:]])
        except ValueError:
            raise CorpusFormatError(f"{path}: line {lineno}: bad float value") from None

    rng = np.random.default_rng(seed)
    W1 = np.empty((k, vocab.size))
    covered = 0
    missing: list[str] = []
    for idx, tok in enumerate(vocab.tokens):
        vec = table.get(tok)
        if vec is None:
            W1[:, idx] = rng.normal(0.0, fallback_std, k)
            missing.append(tok)
        else:
            W1[:, idx] = vec
            covered += 1
    return EmbeddingLayer(W1), CoverageReport(covered, len(missing), tuple(missing))


# ---------------------------------------------------------------------------
# Training data layout
# ---------------------------------------------------------------------------


@dataclass
class TrainingData:
    """Encoded sentences packed flat for the batch kernels.

    ``labels[t]`` holds the 0/1 targets for task ``t`` (aspects 0..C-1,
    sentiment C) and ``qualify[t]`` masks the sentences the task may train
    on: every sentence for aspect tasks, aspect-bearing sentences for the
    sentiment task.
    """

    ids_flat: np.ndarray
    starts: np.ndarray
    plens: np.ndarray
    labels: np.ndarray  # (C+1, n) float64
    qualify: np.ndarray  # (C+1, n) bool
    count: int
    skipped_empty: int


def prepare_training_data(corpus: Corpus, indices, r: int) -> TrainingData:
    idx = range(len(corpus)) if indices is None else indices
    C = corpus.schema.count
    pieces, flag_rows, sent_labels, has_aspect = [], [], [], []
    skipped = 0
    for i in idx:
        ls = corpus.sentences[i]
        if ls.sentence.length == 0:
            skipped += 1
            continue
        pieces.append(encode(ls.sentence, corpus.vocabulary, r))
        flag_rows.append(ls.aspects)
        has_aspect.append(bool(ls.aspects.any()))
        sent_labels.append(1.0 if ls.sentiment else 0.0)
    n = len(pieces)
    if n == 0:
        return TrainingData(
            np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64),
            np.zeros((C + 1, 0)), np.zeros((C + 1, 0), bool), 0, skipped,
        )
    plens = np.array([len(p) for p in pieces], np.int64)
    starts = np.concatenate([[0], np.cumsum(plens)[:-1]]).astype(np.int64)
    labels = np.empty((C + 1, n))
    qualify = np.empty((C + 1, n), bool)
    flags = np.array(flag_rows, dtype=bool)
    for t in range(C):
        labels[t] = flags[:, t].astype(np.float64)
        qualify[t] = True
    labels[C] = np.array(sent_labels)
    qualify[C] = np.array(has_aspect, bool)
    return TrainingData(
        np.ascontiguousarray(np.concatenate(pieces), np.int64),
        starts,
        plens,
        np.ascontiguousarray(labels),
        np.ascontiguousarray(qualify),
        n,
        skipped,
    )


def _net_params(net: TaskNetwork, prefix: str = "") -> dict[str, np.ndarray]:
    return {
        prefix + "W1": net.embedding.weights,
        prefix + "W2": net.conv.weights,
        prefix + "b2": net.conv.bias,
        prefix + "w3": net.head.weights,
        prefix + "b3": net.head.bias,
    }


def _batch_grads(net: TaskNetwork, data: TrainingData, batch, labels, qualify):
    return kernels.batch_gradients(
        net.embedding.weights,
        net.conv.weights,
        net.conv.bias,
        net.head.weights,
        float(net.head.bias),
        data.ids_flat,
        data.starts,
        data.plens,
        batch,
        labels,
        qualify,
    )


def _mean_grads(dW1, dW2, db2, dw3, db3, used: int, prefix: str = "") -> dict:
    for arr in (dW1, dW2, db2, dw3):
        arr /= used
    return {
        prefix + "W1": dW1,
        prefix + "W2": dW2,
        prefix + "b2": db2,
        prefix + "w3": dw3,
        prefix + "b3": np.asarray(db3 / used),
    }


def train_single_task(
    net: TaskNetwork,
    data: TrainingData,
    labels: np.ndarray,
    qualify: np.ndarray,
    hp: Hyperparams,
    shuffle_rng: np.random.Generator,
) -> list[float]:
    """Train one task network alone; returns the mean loss per epoch."""
    if data.count == 0:
        raise ValidationError("empty training split")
    state = OptimizerState()
    params = _net_params(net)
    batch_size = min(hp.batch_size, data.count)
    losses = []
    for _ in range(hp.epochs):
        perm = shuffle_rng.permutation(data.count).astype(np.int64)
        loss_sum, used_sum = 0.0, 0
        for start in range(0, data.count, batch_size):
            batch = np.ascontiguousarray(perm[start : start + batch_size])
            loss, used, *grads = _batch_grads(net, data, batch, labels, qualify)
            if used == 0:
                continue
            sgd_momentum_step(
                params, _mean_grads(*grads, used), state,
                hp.learning_rate, hp.momentum,
            )
            loss_sum += loss
            used_sum += used
        losses.append(loss_sum / used_sum if used_sum else float("nan"))
    return losses


def train_multitask_run(
    model: MultitaskCNN,
    data: TrainingData,
    main_task: int,
    hp: Hyperparams,
    lambdas: np.ndarray,
    shuffle_rng: np.random.Generator,
) -> list[float]:
    """One training run with ``main_task`` as the main task.

    Per batch: main update first, then auxiliary updates in task-index
    order, each recomputing its gradients against the already-updated
    shared embedding.  Auxiliary gradients are scaled by that task's
    weight; a weight of exactly 0 or an empty qualifying set skips the
    update entirely.
    """
    state = OptimizerState()
    n_tasks = model.task_count
    order = [main_task] + [t for t in range(n_tasks) if t != main_task]
    batch_size = min(hp.batch_size, data.count)
    losses = []
    for _ in range(hp.epochs):
        perm = shuffle_rng.permutation(data.count).astype(np.int64)
        main_loss, main_used = 0.0, 0
        for start in range(0, data.count, batch_size):
            batch = np.ascontiguousarray(perm[start : start + batch_size])
            for t in order:
                weight = 1.0 if t == main_task else float(lambdas[t])
                if weight == 0.0:
                    continue
                net = model.task_network(t)
                loss, used, *raw = _batch_grads(
                    net, data, batch, data.labels[t], data.qualify[t]
                )
                if used == 0:
                    continue
                grads = _mean_grads(*raw, used, prefix=f"task{t}.")
                grads["W1"] = grads.pop(f"task{t}.W1")
                if weight != 1.0:
                    for g in grads.values():
                        g *= weight
                params = _net_params(net, prefix=f"task{t}.")
                params["W1"] = params.pop(f"task{t}.W1")
                sgd_momentum_step(params, grads, state, hp.learning_rate, hp.momentum)
                if t == main_task:
                    main_loss += loss
                    main_used += used
        losses.append(main_loss / main_used if main_used else float("nan"))
    return losses


# ---------------------------------------------------------------------------
# Trained suites
# ---------------------------------------------------------------------------


@dataclass
class TrainedSuite:
    """Training output bundled with everything inference needs.

    For the multitask architecture this holds one model per main task
    (task ``t`` is served by the model that was trained with ``t`` as its
    main task); for the cascaded architecture it wraps the single model.
    """

    kind: str  # "ccnn" | "mcnn"
    schema: AspectSchema
    vocabulary: Vocabulary
    threshold: float
    hyperparams: Hyperparams
    ccnn: CascadedCNN | None = None
    models: list[MultitaskCNN] | None = None
    logs: list[list[float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind == "ccnn":
            if self.ccnn is None:
                raise ValidationError("cascaded suite needs its model")
        elif self.kind == "mcnn":
            if not self.models or len(self.models) != self.schema.count + 1:
                raise ValidationError("multitask suite needs one model per task")
        else:
            raise ValidationError(f"unknown suite kind {self.kind!r}")

    @property
    def radius(self) -> int:
        if self.kind == "ccnn":
            return self.ccnn.radius
        return self.models[0].radius

    def task_probability(self, task: int, padded_ids) -> float:
        if self.kind == "ccnn":
            return self.ccnn.task_probability(task, padded_ids)
        return self.models[task].task_probability(task, padded_ids)


def train_ccnn(
    corpus: Corpus,
    hp: Hyperparams,
    train_indices=None,
    pretrained: EmbeddingLayer | None = None,
) -> TrainedSuite:
    """Train the cascaded model: every network independently.

    The C aspect networks train on all sentences with their own flag as
    the binary label; the sentiment network trains on the aspect-bearing
    subset only.  Each network draws its own seeded init and shuffle
    streams, so training one leaves every other bitwise untouched.
    """
    C = corpus.schema.count
    r = hp.h // 2
    data = prepare_training_data(corpus, train_indices, r)
    if data.count == 0:
        raise ValidationError("empty training split")
    vocab_size = corpus.vocabulary.size
    aspect_nets, logs = [], []
    for t in range(C):
        init_rng = _child_rng(hp.seed, t, 0)
        shuffle_rng = _child_rng(hp.seed, t, 1)
        net = TaskNetwork(
            _init_embedding(hp.k, vocab_size, init_rng, hp.init_std, pretrained),
            *_init_part(hp.k, hp.m_aspect, hp.h, init_rng, hp.init_std),
        )
        logs.append(train_single_task(net, data, data.labels[t], data.qualify[t], hp, shuffle_rng))
        aspect_nets.append(net)

    sent_indices = [
        i
        for i in (range(len(corpus)) if train_indices is None else train_indices)
        if corpus.sentences[i].aspects.any()
    ]
    sent_data = prepare_training_data(corpus, sent_indices, r)
    if sent_data.count == 0:
        raise ValidationError("no aspect-bearing sentences to train the sentiment task")
    init_rng = _child_rng(hp.seed, C, 0)
    shuffle_rng = _child_rng(hp.seed, C, 1)
    sentiment_net = TaskNetwork(
        _init_embedding(hp.k, vocab_size, init_rng, hp.init_std, pretrained),
        *_init_part(hp.k, hp.m_sentiment, hp.h, init_rng, hp.init_std),
    )
    logs.append(
        train_single_task(
            sentiment_net, sent_data, sent_data.labels[C], sent_data.qualify[C],
            hp, shuffle_rng,
        )
    )
    model = CascadedCNN(
        schema=corpus.schema,
        aspect_nets=aspect_nets,
        sentiment_net=sentiment_net,
        threshold=hp.threshold,
    )
    return TrainedSuite(
        kind="ccnn", schema=corpus.schema, vocabulary=corpus.vocabulary,
        threshold=hp.threshold, hyperparams=hp, ccnn=model, logs=logs,
    )


def init_multitask_model(
    schema: AspectSchema,
    vocab_size: int,
    hp: Hyperparams,
    rng: np.random.Generator,
    pretrained: EmbeddingLayer | None = None,
) -> MultitaskCNN:
    embedding = _init_embedding(hp.k, vocab_size, rng, hp.init_std, pretrained)
    parts = []
    for t in range(schema.count + 1):
        m = hp.m_aspect if t < schema.count else hp.m_sentiment
        parts.append(_init_part(hp.k, m, hp.h, rng, hp.init_std))
    return MultitaskCNN(
        schema=schema, embedding=embedding, parts=parts, threshold=hp.threshold
    )


def train_mcnn(
    corpus: Corpus,
    hp: Hyperparams,
    train_indices=None,
    pretrained: EmbeddingLayer | None = None,
) -> TrainedSuite:
    """Train one multitask model per main task and bundle them."""
    C = corpus.schema.count
    lambdas = hp.resolve_lambdas(C + 1)
    data = prepare_training_data(corpus, train_indices, hp.h // 2)
    if data.count == 0:
        raise ValidationError("empty training split")
    models, logs = [], []
    for main in range(C + 1):
        init_rng = _child_rng(hp.seed, main, 0)
        shuffle_rng = _child_rng(hp.seed, main, 1)
        model = init_multitask_model(
            corpus.schema, corpus.vocabulary.size, hp, init_rng, pretrained
        )
        logs.append(train_multitask_run(model, data, main, hp, lambdas, shuffle_rng))
        models.append(model)
    return TrainedSuite(
        kind="mcnn", schema=corpus.schema, vocabulary=corpus.vocabulary,
        threshold=hp.threshold, hyperparams=hp, models=models, logs=logs,
    )


def _child_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_MAGIC = b"AOSM"
_VERSION = 1


def _hyper_to_meta(hp: Hyperparams) -> dict:
    meta = dataclasses.asdict(hp)
    if isinstance(meta["lambdas"], tuple):
        meta["lambdas"] = list(meta["lambdas"])
    return meta


def _hyper_from_meta(meta: dict) -> Hyperparams:
    kwargs = dict(meta)
    if isinstance(kwargs.get("lambdas"), list):
        kwargs["lambdas"] = tuple(kwargs["lambdas"])
    return Hyperparams(**kwargs)


def _net_tensors(prefix: str, net: TaskNetwork):
    yield f"{prefix}.W1", net.embedding.weights
    yield f"{prefix}.W2", net.conv.weights
    yield f"{prefix}.b2", net.conv.bias
    yield f"{prefix}.w3", net.head.weights
    yield f"{prefix}.b3", net.head.bias


def _disassemble(model) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    tensors: list[tuple[str, np.ndarray]] = []
    if isinstance(model, TrainedSuite):
        meta = {
            "kind": model.kind,
            "schema": list(model.schema.names),
            "threshold": model.threshold,
            "hyper": _hyper_to_meta(model.hyperparams),
        }
        if model.kind == "ccnn":
            for t in range(model.schema.count):
                tensors.extend(_net_tensors(f"net{t}", model.ccnn.aspect_nets[t]))
            tensors.extend(_net_tensors("sentiment", model.ccnn.sentiment_net))
            meta["windows"] = model.ccnn.sentiment_net.conv.window
        else:
            for i, m in enumerate(model.models):
                tensors.append((f"model{i}.W1", m.embedding.weights))
                for t, (conv, head) in enumerate(m.parts):
                    tensors.append((f"model{i}.task{t}.W2", conv.weights))
                    tensors.append((f"model{i}.task{t}.b2", conv.bias))
                    tensors.append((f"model{i}.task{t}.w3", head.weights))
                    tensors.append((f"model{i}.task{t}.b3", head.bias))
            meta["windows"] = model.models[0].parts[0][0].window
        vocab = model.vocabulary
    elif isinstance(model, CascadedSVM):
        meta = {
            "kind": "svm",
            "schema": list(model.schema.names),
            "threshold": model.threshold,
            "reg_c": model.reg_c,
        }
        for t, lin in enumerate([*model.aspect_models, model.sentiment_model]):
            tensors.append((f"task{t}.w", lin.weights))
            tensors.append((f"task{t}.b", np.asarray(lin.bias)))
        vocab = model.vocabulary
    else:
        raise ValidationError(f"cannot serialize {type(model).__name__}")
    meta["vocab_tokens"] = list(vocab.tokens)
    meta["vocab_hash"] = vocab.content_hash()
    meta["tensors"] = [{"name": n, "shape": list(a.shape)} for n, a in tensors]
    return meta, tensors


def save_model(model) -> bytes:
    """Serialize a trained suite or SVM cascade into a versioned container."""
    meta, tensors = _disassemble(model)
    payload = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<I", _VERSION)
    out += struct.pack("<Q", len(payload))
    out += payload
    for _, arr in tensors:
        out += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return bytes(out)


def _rebuild_vocab(meta: dict) -> Vocabulary:
    tokens = tuple(meta["vocab_tokens"])
    vocab = Vocabulary(tokens=tokens, index={t: i for i, t in enumerate(tokens[2:], 2)})
    if vocab.content_hash() != meta["vocab_hash"]:
        raise ModelFormatError("stored vocabulary does not match its content hash")
    return vocab


def load_model(data: bytes, expected_schema: AspectSchema | None = None,
               expected_vocab: Vocabulary | None = None):
    """Load a model container; the inverse of :func:`save_model`.

    Optionally validates the stored schema/vocabulary against what the
    caller expects.
    """
    if len(data) < 16 or data[:4] != _MAGIC:
        raise ModelFormatError("not a model container")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _VERSION:
        raise ModelFormatError(f"unsupported container version {version}")
    (meta_len,) = struct.unpack_from("<Q", data, 8)
    off = 16
    if len(data) < off + meta_len:
        raise ModelFormatError("truncated container (metadata)")
    try:
        meta = json.loads(data[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ModelFormatError("corrupt container metadata") from None
    off += meta_len

    arrays: dict[str, np.ndarray] = {}
    for spec in meta["tensors"]:
        size = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = size * 8
        if len(data) < off + nbytes:
            raise ModelFormatError(f"truncated container (tensor {spec['name']})")
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).copy()
        arrays[spec["name"]] = arr.reshape(spec["shape"])
        off += nbytes
    if off != len(data):
        raise ModelFormatError("trailing bytes after the last tensor")

    schema = AspectSchema(names=tuple(meta["schema"]))
    vocab = _rebuild_vocab(meta)
    if expected_schema is not None and expected_schema.names != schema.names:
        raise ValidationError("stored schema does not match the expected schema")
    if expected_vocab is not None and expected_vocab.content_hash() != meta["vocab_hash"]:
        raise ValidationError("stored vocabulary does not match the expected vocabulary")

    kind = meta["kind"]
    threshold = meta["threshold"]
    if kind == "svm":
        linear = [
            LinearModel(arrays[f"task{t}.w"], float(arrays[f"task{t}.b"]), meta["reg_c"])
            for t in range(schema.count + 1)
        ]
        return CascadedSVM(
            schema=schema, vocabulary=vocab, aspect_models=linear[:-1],
            sentiment_model=linear[-1], threshold=threshold, reg_c=meta["reg_c"],
        )

    hp = _hyper_from_meta(meta["hyper"])
    h = meta["windows"]

    def net(prefix: str) -> TaskNetwork:
        return TaskNetwork(
            EmbeddingLayer(arrays[f"{prefix}.W1"]),
            ConvLayer(arrays[f"{prefix}.W2"], arrays[f"{prefix}.b2"], h),
            OutputHead(arrays[f"{prefix}.w3"], arrays[f"{prefix}.b3"]),
        )

    if kind == "ccnn":
        model = CascadedCNN(
            schema=schema,
            aspect_nets=[net(f"net{t}") for t in range(schema.count)],
            sentiment_net=net("sentiment"),
            threshold=threshold,
        )
        return TrainedSuite(
            kind="ccnn", schema=schema, vocabulary=vocab, threshold=threshold,
            hyperparams=hp, ccnn=model,
        )
    if kind == "mcnn":
        models = []
        for i in range(schema.count + 1):
            parts = []
            for t in range(schema.count + 1):
                parts.append(
                    (
                        ConvLayer(arrays[f"model{i}.task{t}.W2"],
                                  arrays[f"model{i}.task{t}.b2"], h),
                        OutputHead(arrays[f"model{i}.task{t}.w3"],
                                   arrays[f"model{i}.task{t}.b3"]),
                    )
                )
            models.append(
                MultitaskCNN(
                    schema=schema,
                    embedding=EmbeddingLayer(arrays[f"model{i}.W1"]),
                    parts=parts,
                    threshold=threshold,
                )
            )
        return TrainedSuite(
            kind="mcnn", schema=schema, vocabulary=vocab, threshold=threshold,
            hyperparams=hp, models=models,
        )
    raise ModelFormatError(f"unknown model kind {kind!r}")
