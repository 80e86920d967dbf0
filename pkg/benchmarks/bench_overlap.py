#!/usr/bin/env python
"""Benchmark the overlap-scoring kernel: compiled extension vs pure Python.

Builds a synthetic corpus, then times ranking every document against the full
candidate pool through both code paths and cross-checks that the scores are
bit-identical.

Usage: python benchmarks/bench_overlap.py [--docs 400] [--tokens 60] [--repeat 3]
"""

import argparse
import random
import time

import numpy as np

from histner._kernels import _overlap_py
from histner.corpus import Document, Token
from histner.retrieval import RetrievalIndex, StopwordList

try:
    from histner._kernels import _overlap

    HAVE_COMPILED = True
except ImportError:
    _overlap = None
    HAVE_COMPILED = False


def synthetic_index(n_docs: int, tokens_per_doc: int, seed: int) -> RetrievalIndex:
    rng = random.Random(seed)
    vocab = [f"tok{i:04d}" for i in range(max(200, n_docs))]
    docs = []
    for d in range(n_docs):
        n = rng.randint(tokens_per_doc // 2, tokens_per_doc)
        surfaces = [vocab[int(len(vocab) * rng.random() ** 2)] for _ in range(n)]
        tokens = tuple(Token(s, i) for i, s in enumerate(surfaces))
        docs.append(Document(f"doc-{d:04d}", "bench", "", "train", tokens, ()))
    return RetrievalIndex.build(docs, StopwordList.empty())


def run_all_pairs(kernel, index: RetrievalIndex) -> tuple[float, np.ndarray]:
    csr = index._arrays()
    ids = sorted(index.filtered)
    rows = np.arange(len(ids), dtype=np.int64)
    out = np.empty(len(ids), dtype=np.float64)
    checksum = np.zeros(len(ids))
    started = time.perf_counter()
    for target in ids:
        row = csr.row_of[target]
        lo, hi = csr.indptr[row], csr.indptr[row + 1]
        kernel(csr.ids[lo:hi], csr.tf[lo:hi], csr.tfidf[lo:hi],
               csr.indptr, csr.ids, csr.tf, csr.tfidf, rows, out)
        checksum += out
    return time.perf_counter() - started, checksum


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=400)
    parser.add_argument("--tokens", type=int, default=60)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    index = synthetic_index(args.docs, args.tokens, args.seed)
    pairs = args.docs * args.docs
    print(f"corpus: {args.docs} docs, ~{args.tokens} tokens/doc, "
          f"{pairs} score pairs per pass")

    py_time, py_sum = min(
        (run_all_pairs(_overlap_py.overlap_scores, index) for _ in range(args.repeat)),
        key=lambda r: r[0])
    print(f"pure python : {py_time:.3f}s  ({pairs / py_time / 1e6:.2f} M pairs/s)")

    if not HAVE_COMPILED:
        print("compiled    : extension not built (pip install -e . rebuilds it)")
        return

    cy_time, cy_sum = min(
        (run_all_pairs(_overlap.overlap_scores, index) for _ in range(args.repeat)),
        key=lambda r: r[0])
    print(f"compiled    : {cy_time:.3f}s  ({pairs / cy_time / 1e6:.2f} M pairs/s)")
    print(f"speedup     : {py_time / cy_time:.1f}x")
    assert np.array_equal(py_sum, cy_sum), "paths disagree"
    print("checksums identical across paths")


if __name__ == "__main__":
    main()
