"""Pure-numpy implementations of the network kernels.

This is the fallback path selected with ``ASPECTSUM_BACKEND=numpy``; the
numba module mirrors these signatures exactly.  Shapes follow one
convention throughout: the embedding matrix is ``k x |D|`` (one column per
vocabulary id), filters are the columns of an ``(h*k) x m`` matrix, and a
window vector stacks the h embedded columns in time order.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PROB_FLOOR = float(np.nextafter(0.0, 1.0))
PROB_CEIL = float(np.nextafter(1.0, 0.0))


def sigmoid(z: float) -> float:
    """Numerically stable logistic, clamped into the open interval (0, 1)."""
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


def embed_columns(W1: np.ndarray, ids: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(W1[:, ids])


def _windows(E: np.ndarray, h: int) -> np.ndarray:
    """(l, h*k) matrix whose row t stacks columns t..t+h-1 of E.

    Always materialized C-contiguous: BLAS picks different (bitwise
    inequivalent) code paths for strided inputs, which would break the
    exact forward == composition-of-ops contract.
    """
    k, n = E.shape
    l = n - h + 1
    win = sliding_window_view(E.T, (h, k))[:, 0].reshape(l, h * k)
    return np.ascontiguousarray(win)


def conv_forward(E: np.ndarray, W2: np.ndarray, b2: np.ndarray):
    """Pre-activations and rectified feature maps, both m x l."""
    k = E.shape[0]
    h = W2.shape[0] // k
    pre = np.ascontiguousarray((_windows(E, h) @ W2 + b2).T)
    return pre, np.maximum(pre, 0.0)


def pool_max(fmap: np.ndarray):
    """Max over time per map, with the smallest attaining index."""
    amax = np.argmax(fmap, axis=1)
    pooled = fmap[np.arange(fmap.shape[0]), amax]
    return pooled, amax


def head_logit(pooled: np.ndarray, w3: np.ndarray, b3: float):
    z = float(np.dot(w3, pooled)) + b3
    return z, sigmoid(z)


def forward_example(W1, W2, b2, w3, b3, ids):
    E = embed_columns(W1, ids)
    pre, fmap = conv_forward(E, W2, b2)
    pooled, amax = pool_max(fmap)
    z, p = head_logit(pooled, w3, b3)
    return E, pre, fmap, amax, pooled, z, p


def backward_example(W1, W2, w3, ids, pre, amax, pooled, prob, label):
    """Gradients of the per-example logistic loss.

    Returns (dE, dW2, db2, dw3, db3) where dE spans the padded columns.
    The pooling stage routes gradient only to each map's argmax window and
    the rectifier gate uses the pre-activation sign (zero at exactly 0).
    """
    k = W1.shape[0]
    hk, m = W2.shape
    h = hk // k
    dlogit = prob - label
    dw3 = dlogit * pooled
    db3 = dlogit
    gate = pre[np.arange(m), amax] > 0.0
    coef = np.where(gate, dlogit * w3, 0.0)
    E = embed_columns(W1, ids)
    win = _windows(E, h)
    dW2 = win[amax].T * coef
    db2 = coef.copy()
    dE = np.zeros_like(E)
    for j in np.nonzero(coef)[0]:
        dE[:, amax[j] : amax[j] + h] += (W2[:, j] * coef[j]).reshape(h, k).T
    return dE, dW2, db2, dw3, db3


def touched_positions(ids_len: int, amax, coef, h: int) -> np.ndarray:
    """Padded positions covered by argmax windows with nonzero gradient."""
    touched = np.zeros(ids_len, dtype=bool)
    for j in np.nonzero(coef)[0]:
        touched[amax[j] : amax[j] + h] = True
    return np.nonzero(touched)[0]


def _nonzero_coef(pre, amax, w3, dlogit):
    m = pre.shape[0]
    gate = pre[np.arange(m), amax] > 0.0
    return np.where(gate, dlogit * w3, 0.0)


def sparse_embedding_grad(dE, ids, positions) -> dict[int, np.ndarray]:
    """Column gradients keyed by vocabulary id, accumulated in time order."""
    grads: dict[int, np.ndarray] = {}
    for t in positions:
        col = int(ids[t])
        g = grads.get(col)
        if g is None:
            grads[col] = dE[:, t].copy()
        else:
            g += dE[:, t]
    return grads


def example_loss(prob: float, label: float) -> float:
    if label > 0.5:
        return -math.log(prob)
    return -math.log(1.0 - prob)


def batch_gradients(W1, W2, b2, w3, b3, ids_flat, starts, plens, batch, labels, qualify):
    """Summed gradients and loss over the qualifying members of a batch.

    Returns (loss_sum, used, dW1, dW2, db2, dw3, db3); the caller divides
    by ``used`` to obtain the batch mean.  Accumulation is per example in
    batch order, matching a hand-composed sequence of per-example
    forward/backward calls exactly.
    """
    dW1 = np.zeros_like(W1)
    dW2a = np.zeros_like(W2)
    db2a = np.zeros_like(b2)
    dw3a = np.zeros_like(w3)
    db3a = 0.0
    loss = 0.0
    used = 0
    h = W2.shape[0] // W1.shape[0]
    for idx in batch:
        if not qualify[idx]:
            continue
        s = starts[idx]
        ids = ids_flat[s : s + plens[idx]]
        _, pre, _, amax, pooled, _, p = forward_example(W1, W2, b2, w3, b3, ids)
        y = labels[idx]
        loss += example_loss(p, y)
        dE, dW2, db2, dw3, db3 = backward_example(
            W1, W2, w3, ids, pre, amax, pooled, p, y
        )
        dW2a += dW2
        db2a += db2
        dw3a += dw3
        db3a += db3
        coef = _nonzero_coef(pre, amax, w3, p - y)
        positions = touched_positions(len(ids), amax, coef, h)
        for col, vec in sparse_embedding_grad(dE, ids, positions).items():
            dW1[:, col] += vec
        used += 1
    return loss, used, dW1, dW2a, db2a, dw3a, db3a
