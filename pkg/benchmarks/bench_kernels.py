#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the forward pass and the batched gradient kernel on a synthetic
workload shaped like real training (default-sized network, mixed sentence
lengths), then prints per-call timings and the speedup.  Run directly:

    python3 benchmarks/bench_kernels.py [--batch 256] [--filters 300]
"""

import argparse
import time

import numpy as np

from aspectsum import kernels_numpy


def make_workload(rng, batch, k, m, h, vocab, max_len):
    W1 = rng.normal(0, 0.1, (k, vocab))
    W2 = rng.normal(0, 0.1, (h * k, m))
    b2 = np.zeros(m)
    w3 = rng.normal(0, 0.1, m)
    b3 = 0.0
    pieces = []
    for _ in range(batch):
        length = int(rng.integers(3, max_len + 1))
        pieces.append(
            np.concatenate(
                [np.zeros(h // 2, np.int64), rng.integers(0, vocab, length),
                 np.zeros(h // 2, np.int64)]
            )
        )
    plens = np.array([len(p) for p in pieces], np.int64)
    starts = np.concatenate([[0], np.cumsum(plens)[:-1]]).astype(np.int64)
    ids_flat = np.ascontiguousarray(np.concatenate(pieces), np.int64)
    batch_idx = np.arange(batch, dtype=np.int64)
    labels = rng.integers(0, 2, batch).astype(np.float64)
    qualify = np.ones(batch, dtype=bool)
    return (W1, W2, b2, w3, b3), (ids_flat, starts, plens, batch_idx, labels, qualify)


def time_batch(kernels, params, data, repeats):
    kernels.batch_gradients(*params, *data)  # warmup / JIT compile
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        kernels.batch_gradients(*params, *data)
        best = min(best, time.perf_counter() - t0)
    return best


def time_forward(kernels, params, data, repeats):
    W1, W2, b2, w3, b3 = params
    ids_flat, starts, plens, batch_idx, _, _ = data
    ids = ids_flat[starts[0] : starts[0] + plens[0]]
    kernels.forward_example(W1, W2, b2, w3, b3, ids)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for i in batch_idx[:64]:
            s = starts[i]
            kernels.forward_example(W1, W2, b2, w3, b3, ids_flat[s : s + plens[i]])
        best = min(best, time.perf_counter() - t0)
    return best / 64


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=256)
    parser.add_argument("--k", type=int, default=30)
    parser.add_argument("--filters", type=int, default=300)
    parser.add_argument("--vocab", type=int, default=2000)
    parser.add_argument("--max-len", type=int, default=25)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    params, data = make_workload(
        rng, args.batch, args.k, args.filters, 3, args.vocab, args.max_len
    )

    backends = {"numpy": kernels_numpy}
    try:
        from aspectsum import kernels_numba

        backends["numba"] = kernels_numba
    except ImportError:
        print("numba unavailable; benchmarking the numpy path only")

    print(
        f"workload: batch={args.batch}, k={args.k}, m={args.filters}, "
        f"h=3, vocab={args.vocab}, max_len={args.max_len}"
    )
    rows = {}
    for name, kernels in backends.items():
        fwd = time_forward(kernels, params, data, args.repeats)
        grad = time_batch(kernels, params, data, args.repeats)
        rows[name] = (fwd, grad)
        print(
            f"{name:>6}: forward {fwd * 1e6:9.1f} us/example   "
            f"batch gradient {grad * 1e3:9.2f} ms/batch"
        )
    if len(rows) == 2:
        f_np, g_np = rows["numpy"]
        f_nb, g_nb = rows["numba"]
        print(
            f"speedup: forward x{f_np / f_nb:.1f}, batch gradient x{g_np / g_nb:.1f}"
        )


if __name__ == "__main__":
    main()
