import dataclasses
import math

import numpy as np
import pytest

from aspectsum import nn
from aspectsum.errors import EmptySentenceError, ValidationError
from aspectsum.nn import (
    ConvLayer,
    EmbeddingLayer,
    OutputHead,
    backward,
    convolve,
    embed,
    finite_difference_check,
    forward,
    forward_network,
    head_forward,
    max_over_time,
    random_network,
)

from oracles import (
    conv_oracle,
    max_scan_oracle,
    one_hot_embed_oracle,
    straight_line_forward_oracle,
)


def rand_ids(rng, vocab, length, r=1):
    core = rng.integers(0, vocab, length)
    return np.concatenate([np.zeros(r, np.int64), core, np.zeros(r, np.int64)])


class TestEmbed:
    def test_single_lookup(self):
        W1 = np.zeros((3, 4))
        W1[:, 2] = [0.1, 0.2, 0.3]
        out = embed([2], EmbeddingLayer(W1))
        assert out.shape == (3, 1)
        np.testing.assert_array_equal(out[:, 0], [0.1, 0.2, 0.3])

    def test_repeated_pad(self):
        rng = np.random.default_rng(0)
        layer = EmbeddingLayer(rng.normal(size=(2, 5)))
        out = embed([0, 0], layer)
        np.testing.assert_array_equal(out[:, 0], layer.weights[:, 0])
        np.testing.assert_array_equal(out[:, 1], layer.weights[:, 0])

    def test_matches_one_hot_product_exactly(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            W1 = rng.normal(size=(4, 9))
            ids = rng.integers(0, 9, 6)
            np.testing.assert_array_equal(
                embed(ids, EmbeddingLayer(W1)), one_hot_embed_oracle(W1, ids)
            )

    def test_out_of_range(self):
        layer = EmbeddingLayer(np.zeros((2, 3)))
        with pytest.raises(IndexError):
            embed([3], layer)


class TestConvolve:
    def test_worked_example(self):
        # k=1, h=3, filter (0,1,0), zero bias, padded values [0, 5, -3, 0]:
        # window 0 -> 5, window 1 -> relu(-3) = 0.
        layer = ConvLayer(np.array([[0.0], [1.0], [0.0]]), np.zeros(1), window=3)
        E = np.array([[0.0, 5.0, -3.0, 0.0]])
        np.testing.assert_allclose(convolve(E, layer), [[5.0, 0.0]])

    def test_zero_filter(self):
        rng = np.random.default_rng(1)
        layer = ConvLayer(np.zeros((6, 2)), np.zeros(2), window=3)
        E = rng.normal(size=(2, 7))
        np.testing.assert_array_equal(convolve(E, layer), np.zeros((2, 5)))

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            k = int(rng.integers(1, 6))
            l = int(rng.integers(1, 9))
            m = int(rng.integers(1, 5))
            h = 3
            E = rng.normal(size=(k, l + h - 1))
            W2 = rng.normal(size=(h * k, m))
            b2 = rng.normal(size=m)
            got = convolve(E, ConvLayer(W2, b2, h))
            want = conv_oracle(E, W2, b2, h)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_empty_sentence_rejected(self):
        layer = ConvLayer(np.zeros((3, 1)), np.zeros(1), window=3)
        with pytest.raises(EmptySentenceError):
            convolve(np.zeros((1, 2)), layer)  # only 2r = 2 padded columns

    def test_window_count(self):
        rng = np.random.default_rng(3)
        layer = ConvLayer(rng.normal(size=(6, 4)), np.zeros(4), window=3)
        for l in range(1, 7):
            E = rng.normal(size=(2, l + 2))
            assert convolve(E, layer).shape == (4, l)


class TestMaxOverTime:
    def test_simple(self):
        vals, idxs = max_over_time(np.array([[5.0, 0.0]]))
        assert vals.tolist() == [5.0]
        assert idxs.tolist() == [0]

    def test_tie_breaks_to_first(self):
        vals, idxs = max_over_time(np.array([[2.0, 2.0, 2.0]]))
        assert vals.tolist() == [2.0]
        assert idxs.tolist() == [0]

    def test_matches_scan_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            maps = rng.normal(size=(int(rng.integers(1, 5)), int(rng.integers(1, 9))))
            vals, idxs = max_over_time(maps)
            want_vals, want_idxs = max_scan_oracle(maps)
            np.testing.assert_allclose(vals, want_vals, rtol=0, atol=1e-12)
            np.testing.assert_array_equal(idxs, want_idxs)

    def test_empty_rejected(self):
        with pytest.raises(EmptySentenceError):
            max_over_time(np.zeros((2, 0)))


class TestHeadForward:
    def test_zero_head(self):
        head = OutputHead(np.zeros(3), 0.0)
        assert head_forward(np.array([1.0, -2.0, 5.0]), head) == 0.5

    def test_log3_logit(self):
        head = OutputHead(np.array([1.0]), 0.0)
        p = head_forward(np.array([math.log(3.0)]), head)
        assert p == pytest.approx(0.75, abs=1e-15)

    def test_monotone(self):
        head = OutputHead(np.array([1.0]), 0.0)
        assert head_forward(np.array([2.0]), head) > head_forward(np.array([1.0]), head)

    def test_open_interval_for_extreme_logits(self):
        head = OutputHead(np.array([1.0]), 0.0)
        assert 0.0 < head_forward(np.array([-1000.0]), head)
        assert head_forward(np.array([1000.0]), head) < 1.0


class TestForward:
    def test_composition_bitwise(self):
        rng = np.random.default_rng(5)
        net = random_network(rng, k=3, vocab_size=8, m=4)
        ids = rand_ids(rng, 8, 5)
        p, trace = forward_network(net, ids)
        E = embed(ids, net.embedding)
        fmap = convolve(E, net.conv)
        pooled, amax = max_over_time(fmap)
        np.testing.assert_array_equal(trace.embedded, E)
        np.testing.assert_array_equal(trace.feature_maps, fmap)
        np.testing.assert_array_equal(trace.pooled, pooled)
        np.testing.assert_array_equal(trace.argmax, amax)
        assert p == head_forward(pooled, net.head)

    def test_zero_head_gives_half(self):
        rng = np.random.default_rng(6)
        net = random_network(rng, k=3, vocab_size=8, m=4)
        net.head.weights[:] = 0.0
        net.head.bias[...] = 0.0
        for length in (1, 3, 7):
            p, _ = forward_network(net, rand_ids(rng, 8, length))
            assert p == 0.5

    def test_matches_independent_reimplementation(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            net = random_network(rng, k=int(rng.integers(1, 5)), vocab_size=9,
                                 m=int(rng.integers(1, 5)))
            ids = rand_ids(rng, 9, int(rng.integers(1, 7)))
            p, _ = forward_network(net, ids)
            assert p == pytest.approx(straight_line_forward_oracle(net, ids), abs=1e-12)

    def test_pure(self):
        rng = np.random.default_rng(10)
        net = random_network(rng, k=3, vocab_size=6, m=2)
        ids = rand_ids(rng, 6, 4)
        p1, t1 = forward_network(net, ids)
        p2, t2 = forward_network(net, ids)
        assert p1 == p2
        np.testing.assert_array_equal(t1.feature_maps, t2.feature_maps)

    def test_permutation_covariant_pooling(self):
        rng = np.random.default_rng(12)
        net = random_network(rng, k=3, vocab_size=8, m=5)
        ids = rand_ids(rng, 8, 6)
        _, trace = forward_network(net, ids)
        perm = rng.permutation(5)
        permuted = ConvLayer(
            net.conv.weights[:, perm], net.conv.bias[perm], net.conv.window
        )
        _, trace2 = forward(ids, net.embedding, permuted, OutputHead(net.head.weights[perm]))
        np.testing.assert_array_equal(trace2.pooled, trace.pooled[perm])


class TestBackward:
    def test_zero_gradients_when_prob_equals_label(self):
        rng = np.random.default_rng(13)
        net = random_network(rng, k=3, vocab_size=8, m=4)
        ids = rand_ids(rng, 8, 4)
        _, trace = forward_network(net, ids)
        trace = dataclasses.replace(trace, probability=1.0)
        g = backward(trace, 1.0, net.embedding, net.conv, net.head)
        assert g.embedding == {}
        assert not g.conv_weights.any()
        assert not g.conv_bias.any()
        assert not g.head_weights.any()
        assert g.head_bias == 0.0

    def test_embedding_gradient_limited_to_argmax_windows(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            net = random_network(rng, k=3, vocab_size=9, m=4)
            ids = rand_ids(rng, 9, int(rng.integers(1, 8)))
            _, trace = forward_network(net, ids)
            g = backward(trace, 0.0, net.embedding, net.conv, net.head)
            h = net.conv.window
            allowed = set()
            for j in range(net.conv.filters):
                t0 = int(trace.argmax[j])
                allowed.update(int(ids[t]) for t in range(t0, t0 + h))
            assert set(g.embedding) <= allowed

    def test_stale_trace_rejected(self):
        rng = np.random.default_rng(15)
        net = random_network(rng, k=3, vocab_size=8, m=4)
        ids = rand_ids(rng, 8, 4)
        _, trace = forward_network(net, ids)
        other = random_network(rng, k=3, vocab_size=8, m=5)
        with pytest.raises(ValidationError):
            backward(trace, 1.0, other.embedding, other.conv, other.head)


class TestFiniteDifference:
    def test_fresh_random_network(self):
        rng = np.random.default_rng(16)
        net = random_network(rng, k=4, vocab_size=10, m=4)
        ids = rand_ids(rng, 10, 6)
        err = finite_difference_check(net.embedding, net.conv, net.head, (ids, 1.0))
        assert err < 1e-4

    def test_detects_corrupted_gradients(self):
        rng = np.random.default_rng(17)
        net = random_network(rng, k=3, vocab_size=8, m=3)
        ids = rand_ids(rng, 8, 4)
        y = 1.0
        _, trace = forward_network(net, ids)
        g = backward(trace, y, net.embedding, net.conv, net.head)
        eps = 1e-5

        # Doubled analytic gradient vs central difference on one entry.
        w = net.conv.weights
        orig = w[0, 0]
        w[0, 0] = orig + eps
        up, _ = forward_network(net, ids)
        w[0, 0] = orig - eps
        down, _ = forward_network(net, ids)
        w[0, 0] = orig
        numeric = (nn.example_loss(up, y) - nn.example_loss(down, y)) / (2 * eps)
        doubled = 2.0 * g.conv_weights[0, 0]
        err = abs(doubled - numeric) / max(abs(doubled), abs(numeric), 1e-8)
        if g.conv_weights[0, 0] != 0.0:
            assert err > 0.1

    def test_zero_parameters_closed_form(self):
        # Everything zero: probability is 1/2 and only the head bias has a
        # nonzero derivative, equal to 1/2 - y.
        net = nn.TaskNetwork(
            EmbeddingLayer(np.zeros((3, 5))),
            ConvLayer(np.zeros((9, 2)), np.zeros(2), 3),
            OutputHead(np.zeros(2), 0.0),
        )
        ids = np.array([0, 2, 3, 0], dtype=np.int64)
        p, trace = forward_network(net, ids)
        assert p == 0.5
        g = backward(trace, 0.0, net.embedding, net.conv, net.head)
        assert g.head_bias == pytest.approx(0.5, abs=1e-15)
        err = finite_difference_check(net.embedding, net.conv, net.head, (ids, 0.0))
        assert err < 1e-4

    def test_suite_tolerance(self):
        assert nn.gradient_check_suite(count=20, seed=123) < 1e-4
