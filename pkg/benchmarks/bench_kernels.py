#!/usr/bin/env python3
"""Benchmark the numba kernels against the numpy/Python fallbacks.

The two backends are bit-identical (asserted here on every workload); this
script measures what the JIT buys on the three hot loops: BPE pair counting,
BPE merge application, and MLM mask selection.

Usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --words 200000 --sequences 20000 --output results.json
"""

import argparse
import json
import time

import numpy as np

from bpt import kernels


def make_word_table(rng, n_words, n_symbols=300, max_len=12):
    lengths = rng.integers(2, max_len + 1, n_words)
    offsets = np.zeros(n_words + 1, np.int64)
    np.cumsum(lengths, out=offsets[1:])
    flat = rng.integers(5, n_symbols, int(offsets[-1])).astype(np.int32)
    counts = rng.integers(1, 1000, n_words).astype(np.int64)
    return flat, offsets, counts


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def bench_count_pairs(rng, n_words, repeats):
    flat, offsets, counts = make_word_table(rng, n_words)
    t_nb, (k1, t1) = timeit(lambda: kernels.count_pairs_numba(flat, offsets, counts), repeats)
    t_np, (k2, t2) = timeit(lambda: kernels.count_pairs_numpy(flat, offsets, counts), repeats)
    assert np.array_equal(k1, k2) and np.array_equal(t1, t2)
    return {"numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb, "positions": int(flat.size)}


def bench_apply_merge(rng, n_words, repeats):
    flat, offsets, counts = make_word_table(rng, n_words)
    keys, totals = kernels.count_pairs_numpy(flat, offsets, counts)
    key = int(keys[int(np.argmax(totals))])
    left, right = np.int32(key >> 32), np.int32(key & 0xFFFFFFFF)
    t_nb, (f1, o1) = timeit(lambda: kernels.apply_merge_numba(flat, offsets, left, right, np.int32(9999)), repeats)
    t_np, (f2, o2) = timeit(lambda: kernels.apply_merge_numpy(flat, offsets, left, right, np.int32(9999)), repeats)
    assert np.array_equal(f1, f2) and np.array_equal(o1, o2)
    return {"numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb, "positions": int(flat.size)}


def bench_mask(rng, n_sequences, seq_len, repeats):
    ids = rng.integers(5, 30000, (n_sequences, seq_len)).astype(np.int32)
    special = np.zeros(seq_len, np.uint8)
    special[0] = special[seq_len // 2] = special[-1] = 1

    def run(impl):
        total = 0
        for i in range(n_sequences):
            _, pos, _ = impl(ids[i], special, np.uint64(i), 0.15, 20, 4, 5, 30000)
            total += pos.size
        return total

    t_nb, n1 = timeit(lambda: run(kernels._mask_sequence_nb_wrapper), repeats)
    t_np, n2 = timeit(lambda: run(kernels.mask_sequence_numpy), repeats)
    assert n1 == n2
    return {"numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb, "sequences": n_sequences}


def main():
    parser = argparse.ArgumentParser(description="numba vs numpy kernel benchmark")
    parser.add_argument("--words", type=int, default=100_000, help="distinct words in the BPE table")
    parser.add_argument("--sequences", type=int, default=10_000, help="sequences for the mask benchmark")
    parser.add_argument("--seq-len", type=int, default=128)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--output", help="write results JSON here")
    args = parser.parse_args()

    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.BACKEND} (BPT_NO_NUMBA toggles the fallback)")
    print("warming up JIT...")
    bench_count_pairs(rng, 1000, 1)
    bench_apply_merge(rng, 1000, 1)
    bench_mask(rng, 10, args.seq_len, 1)

    results = {
        "count_pairs": bench_count_pairs(rng, args.words, args.repeats),
        "apply_merge": bench_apply_merge(rng, args.words, args.repeats),
        "mask_sequence": bench_mask(rng, args.sequences, args.seq_len, args.repeats),
    }

    print(f"{'kernel':<16} {'numba (ms)':>12} {'numpy (ms)':>12} {'speedup':>9}")
    print("-" * 52)
    for name, r in results.items():
        print(f"{name:<16} {r['numba_s'] * 1e3:>12.2f} {r['numpy_s'] * 1e3:>12.2f} {r['speedup']:>8.1f}x")

    if args.output:
        with open(args.output, "w") as f:
            json.dump(results, f, indent=2)
        print(f"results written to {args.output}")


if __name__ == "__main__":
    main()
