from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from aspectsum.errors import EmptySentenceError, ValidationError
from aspectsum.models import (
    CascadedCNN,
    ClassifiedSentence,
    MultitaskCNN,
    classify,
    predict_aspects,
    predict_sentiment,
)
from aspectsum.nn import ConvLayer, EmbeddingLayer, OutputHead, TaskNetwork, forward
from aspectsum.text import AspectSchema

SCHEMA = AspectSchema(names=("battery", "screen", "camera"))
K, M, H, VOCAB = 4, 3, 3, 12


def make_net(rng, head_bias=0.0, zero_head=False):
    head_w = np.zeros(M) if zero_head else rng.normal(0, 0.5, M)
    return TaskNetwork(
        EmbeddingLayer(rng.normal(0, 0.5, (K, VOCAB))),
        ConvLayer(rng.normal(0, 0.5, (H * K, M)), rng.normal(0, 0.5, M), H),
        OutputHead(head_w, head_bias),
    )


def make_ccnn(rng, **net_kwargs):
    return CascadedCNN(
        schema=SCHEMA,
        aspect_nets=[make_net(rng, **net_kwargs) for _ in range(SCHEMA.count)],
        sentiment_net=make_net(rng, **net_kwargs),
    )


def make_mcnn(rng):
    emb = EmbeddingLayer(rng.normal(0, 0.5, (K, VOCAB)))
    parts = [
        (
            ConvLayer(rng.normal(0, 0.5, (H * K, M)), rng.normal(0, 0.5, M), H),
            OutputHead(rng.normal(0, 0.5, M), float(rng.normal())),
        )
        for _ in range(SCHEMA.count + 1)
    ]
    return MultitaskCNN(schema=SCHEMA, embedding=emb, parts=parts)


def rand_ids(rng, length):
    return np.concatenate(
        [np.zeros(1, np.int64), rng.integers(0, VOCAB, length), np.zeros(1, np.int64)]
    )


class TestPredictAspects:
    def test_zero_heads_give_half_and_no_flags(self):
        rng = np.random.default_rng(0)
        model = make_ccnn(rng, zero_head=True, head_bias=0.0)
        probs, flags = predict_aspects(model, rand_ids(rng, 5))
        assert np.all(probs == 0.5)
        assert not flags.any()  # strict > rule: 0.5 is not a member

    def test_forced_logit_fires_flag(self):
        rng = np.random.default_rng(1)
        model = make_ccnn(rng, zero_head=True, head_bias=0.0)
        model.aspect_nets[1].head.bias[...] = 10.0
        probs, flags = predict_aspects(model, rand_ids(rng, 5))
        assert flags.tolist() == [False, True, False]
        assert probs[1] > 0.99

    def test_empty_sentence_rejected(self):
        rng = np.random.default_rng(2)
        model = make_ccnn(rng)
        with pytest.raises(EmptySentenceError):
            classify(model, np.zeros(2, np.int64))  # only the two PAD columns


class TestPredictSentiment:
    def test_absent_without_flags(self):
        rng = np.random.default_rng(3)
        model = make_ccnn(rng)
        assert predict_sentiment(model, rand_ids(rng, 4), np.zeros(3, bool)) is None

    def test_forced_positive(self):
        rng = np.random.default_rng(4)
        model = make_ccnn(rng, zero_head=True)
        model.sentiment_net.head.bias[...] = 10.0
        call = predict_sentiment(model, rand_ids(rng, 4), np.array([True, False, False]))
        assert call is not None and call.positive and call.probability > 0.99

    def test_forced_negative(self):
        rng = np.random.default_rng(5)
        model = make_ccnn(rng, zero_head=True)
        model.sentiment_net.head.bias[...] = -10.0
        call = predict_sentiment(model, rand_ids(rng, 4), np.array([True, False, False]))
        assert call is not None and not call.positive and call.probability < 0.01


class TestClassify:
    def test_equals_manual_composition(self):
        rng = np.random.default_rng(6)
        model = make_ccnn(rng)
        ids = rand_ids(rng, 6)
        cs = classify(model, ids)
        probs, flags = predict_aspects(model, ids)
        call = predict_sentiment(model, ids, flags)
        np.testing.assert_array_equal(cs.aspect_probabilities, probs)
        np.testing.assert_array_equal(cs.aspect_flags, flags)
        if call is None:
            assert cs.sentiment is None
        else:
            assert cs.sentiment.positive == call.positive
            assert cs.sentiment.probability == call.probability

    def test_multi_aspect_single_sentiment(self):
        rng = np.random.default_rng(7)
        model = make_ccnn(rng, zero_head=True)
        model.aspect_nets[0].head.bias[...] = 10.0
        model.aspect_nets[2].head.bias[...] = 10.0
        model.sentiment_net.head.bias[...] = 10.0
        cs = classify(model, rand_ids(rng, 5))
        assert cs.aspect_flags.tolist() == [True, False, True]
        assert cs.sentiment is not None
        assert cs.sentiment.positive  # one polarity shared by both aspects

    def test_gating_invariant_random_models(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            model = make_ccnn(rng)
            cs = classify(model, rand_ids(rng, int(rng.integers(1, 9))))
            assert bool(cs.aspect_flags.any()) == (cs.sentiment is not None)

    def test_deterministic_and_thread_safe(self):
        rng = np.random.default_rng(9)
        model = make_mcnn(rng)
        batch = [rand_ids(rng, int(rng.integers(1, 8))) for _ in range(32)]
        sequential = [classify(model, ids) for ids in batch]
        with ThreadPoolExecutor(max_workers=8) as pool:
            concurrent = list(pool.map(lambda ids: classify(model, ids), batch))
        for a, b in zip(sequential, concurrent):
            np.testing.assert_array_equal(a.aspect_flags, b.aspect_flags)
            np.testing.assert_array_equal(a.aspect_probabilities, b.aspect_probabilities)
            if a.sentiment is None:
                assert b.sentiment is None
            else:
                assert a.sentiment.probability == b.sentiment.probability

    def test_threshold_reparameterization(self):
        # logit > 0 and probability > 0.5 pick identical flags.
        rng = np.random.default_rng(10)
        for _ in range(20):
            model = make_mcnn(rng)
            ids = rand_ids(rng, 5)
            for t in range(SCHEMA.count):
                conv, head = model.parts[t]
                _, trace = forward(ids, model.embedding, conv, head)
                assert (trace.logit > 0.0) == (trace.probability > 0.5)


class TestSharingSemantics:
    def test_multitask_embedding_is_shared(self):
        rng = np.random.default_rng(11)
        model = make_mcnn(rng)
        ids = rand_ids(rng, 5)
        before = [model.task_probability(t, ids) for t in range(4)]
        model.embedding.weights += rng.normal(0, 0.5, model.embedding.weights.shape)
        after = [model.task_probability(t, ids) for t in range(4)]
        assert all(a != b for a, b in zip(before, after))

    def test_cascaded_embeddings_are_isolated(self):
        rng = np.random.default_rng(12)
        model = make_ccnn(rng)
        ids = rand_ids(rng, 5)
        before = [model.task_probability(t, ids) for t in range(4)]
        model.aspect_nets[0].embedding.weights += 1.0
        after = [model.task_probability(t, ids) for t in range(4)]
        assert after[0] != before[0]
        assert after[1:] == before[1:]


class TestArchitectureEquivalenceAtInit:
    def test_identical_tensors_classify_identically(self):
        # A cascaded model whose per-task embeddings are copies of one
        # shared matrix is indistinguishable from the multitask model
        # built from the same tensors, before any training.
        rng = np.random.default_rng(21)
        mcnn = make_mcnn(rng)
        ccnn = CascadedCNN(
            schema=SCHEMA,
            aspect_nets=[
                TaskNetwork(
                    EmbeddingLayer(mcnn.embedding.weights.copy()),
                    ConvLayer(conv.weights.copy(), conv.bias.copy(), conv.window),
                    OutputHead(head.weights.copy(), head.bias.copy()),
                )
                for conv, head in mcnn.parts[:-1]
            ],
            sentiment_net=TaskNetwork(
                EmbeddingLayer(mcnn.embedding.weights.copy()),
                ConvLayer(
                    mcnn.parts[-1][0].weights.copy(),
                    mcnn.parts[-1][0].bias.copy(),
                    mcnn.parts[-1][0].window,
                ),
                OutputHead(
                    mcnn.parts[-1][1].weights.copy(), mcnn.parts[-1][1].bias.copy()
                ),
            ),
        )
        for _ in range(10):
            ids = rand_ids(rng, int(rng.integers(1, 8)))
            a = classify(mcnn, ids)
            b = classify(ccnn, ids)
            np.testing.assert_array_equal(a.aspect_probabilities, b.aspect_probabilities)
            np.testing.assert_array_equal(a.aspect_flags, b.aspect_flags)
            if a.sentiment is None:
                assert b.sentiment is None
            else:
                assert a.sentiment.probability == b.sentiment.probability


class TestClassifiedSentence:
    def test_gating_enforced_at_construction(self):
        from aspectsum.models import SentimentCall

        with pytest.raises(ValidationError):
            ClassifiedSentence(
                sentence=None,
                aspect_flags=np.array([False, False]),
                aspect_probabilities=np.array([0.1, 0.2]),
                sentiment=SentimentCall(True, 0.9),
            )
        with pytest.raises(ValidationError):
            ClassifiedSentence(
                sentence=None,
                aspect_flags=np.array([True, False]),
                aspect_probabilities=np.array([0.9, 0.2]),
                sentiment=None,
            )
