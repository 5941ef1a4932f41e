"""Numba-compiled network kernels (default backend).

Mirrors the call surface of :mod:`aspectsum.kernels_numpy` with scalar
loops compiled by ``@njit``.  The batch kernel accumulates per-example
gradients in batch order with the same grouping as the sparse per-example
path, so a hand-composed forward/backward/step sequence reproduces the
trainer exactly.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .kernels_numpy import PROB_CEIL, PROB_FLOOR


@njit(cache=True)
def sigmoid(z):
    if z >= 0.0:
        p = 1.0 / (1.0 + math.exp(-z))
    else:
        ez = math.exp(z)
        p = ez / (1.0 + ez)
    if p < PROB_FLOOR:
        return PROB_FLOOR
    if p > PROB_CEIL:
        return PROB_CEIL
    return p


@njit(cache=True)
def embed_columns(W1, ids):
    k = W1.shape[0]
    n = ids.shape[0]
    E = np.empty((k, n))
    for t in range(n):
        col = ids[t]
        for i in range(k):
            E[i, t] = W1[i, col]
    return E


@njit(cache=True)
def conv_forward(E, W2, b2):
    k = E.shape[0]
    n = E.shape[1]
    hk = W2.shape[0]
    m = W2.shape[1]
    h = hk // k
    l = n - h + 1
    # One window vector per row, then a single matrix product; for wide
    # filter banks the BLAS call dominates scalar loops by a wide margin.
    win = np.empty((l, hk))
    for t in range(l):
        for o in range(h):
            base = o * k
            for i in range(k):
                win[t, base + i] = E[i, t + o]
    scores = np.dot(win, W2)
    pre = np.empty((m, l))
    fmap = np.empty((m, l))
    for t in range(l):
        for j in range(m):
            s = scores[t, j] + b2[j]
            pre[j, t] = s
            fmap[j, t] = s if s > 0.0 else 0.0
    return pre, fmap


@njit(cache=True)
def pool_max(fmap):
    m = fmap.shape[0]
    l = fmap.shape[1]
    pooled = np.empty(m)
    amax = np.empty(m, np.int64)
    for j in range(m):
        best = fmap[j, 0]
        bi = 0
        for t in range(1, l):
            v = fmap[j, t]
            if v > best:
                best = v
                bi = t
        pooled[j] = best
        amax[j] = bi
    return pooled, amax


@njit(cache=True)
def head_logit(pooled, w3, b3):
    z = b3
    for j in range(w3.shape[0]):
        z += w3[j] * pooled[j]
    return z, sigmoid(z)


@njit(cache=True)
def forward_example(W1, W2, b2, w3, b3, ids):
    E = embed_columns(W1, ids)
    pre, fmap = conv_forward(E, W2, b2)
    pooled, amax = pool_max(fmap)
    z, p = head_logit(pooled, w3, b3)
    return E, pre, fmap, amax, pooled, z, p


@njit(cache=True)
def backward_example(W1, W2, w3, ids, pre, amax, pooled, prob, label):
    k = W1.shape[0]
    hk = W2.shape[0]
    m = W2.shape[1]
    h = hk // k
    n = ids.shape[0]
    dlogit = prob - label
    dw3 = np.empty(m)
    for j in range(m):
        dw3[j] = dlogit * pooled[j]
    db3 = dlogit
    dW2 = np.zeros((hk, m))
    db2 = np.zeros(m)
    dE = np.zeros((k, n))
    for j in range(m):
        t0 = amax[j]
        if pre[j, t0] > 0.0:
            c = dlogit * w3[j]
            if c != 0.0:
                db2[j] = c
                for o in range(h):
                    col = ids[t0 + o]
                    base = o * k
                    for i in range(k):
                        dW2[base + i, j] = c * W1[i, col]
                        dE[i, t0 + o] += c * W2[base + i, j]
    return dE, dW2, db2, dw3, db3


@njit(cache=True)
def example_loss(prob, label):
    if label > 0.5:
        return -math.log(prob)
    return -math.log(1.0 - prob)


@njit(cache=True)
def batch_gradients(W1, W2, b2, w3, b3, ids_flat, starts, plens, batch, labels, qualify):
    k = W1.shape[0]
    hk = W2.shape[0]
    m = W2.shape[1]
    h = hk // k
    dW1 = np.zeros_like(W1)
    dW2a = np.zeros((hk, m))
    db2a = np.zeros(m)
    dw3a = np.zeros(m)
    db3a = 0.0
    loss = 0.0
    used = 0
    tmp = np.empty(k)
    for bi in range(batch.shape[0]):
        idx = batch[bi]
        if not qualify[idx]:
            continue
        s = starts[idx]
        n = plens[idx]
        ids = ids_flat[s : s + n]
        E, pre, fmap, amax, pooled, z, p = forward_example(W1, W2, b2, w3, b3, ids)
        y = labels[idx]
        loss += example_loss(p, y)
        dE, dW2, db2, dw3, db3 = backward_example(
            W1, W2, w3, ids, pre, amax, pooled, p, y
        )
        for a in range(hk):
            for j in range(m):
                dW2a[a, j] += dW2[a, j]
        for j in range(m):
            db2a[j] += db2[j]
            dw3a[j] += dw3[j]
        db3a += db3
        # Positions inside open argmax windows; group repeats of the same
        # vocabulary id so accumulation matches the sparse per-example path.
        touched = np.zeros(n, np.bool_)
        dlogit = p - y
        for j in range(m):
            t0 = amax[j]
            if pre[j, t0] > 0.0 and dlogit * w3[j] != 0.0:
                for o in range(h):
                    touched[t0 + o] = True
        for t in range(n):
            if not touched[t]:
                continue
            col = ids[t]
            dup = False
            for t2 in range(t):
                if touched[t2] and ids[t2] == col:
                    dup = True
                    break
            if dup:
                continue
            for i in range(k):
                tmp[i] = dE[i, t]
            for t2 in range(t + 1, n):
                if touched[t2] and ids[t2] == col:
                    for i in range(k):
                        tmp[i] += dE[i, t2]
            for i in range(k):
                dW1[i, col] += tmp[i]
        used += 1
    return loss, used, dW1, dW2a, db2a, dw3a, db3a
