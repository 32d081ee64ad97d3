#!/usr/bin/env python3
"""Measure the ANN accuracy/latency trade-off across search_k and n_trees.

Builds hash embeddings for a synthetic taxonomy, then sweeps the traversal
budget (and optionally the forest size) against the brute-force oracle,
printing mean top-k overlap and per-query latency for each setting.
"""

import argparse
import time

import numpy as np

from tagrank.ann import IndexConfig, build_forest, exact_topk, query
from tagrank.corpus import render_document_text, render_subject_text
from tagrank.embedding import EmbedderConfig, embed_corpus
from tagrank.synth import synthetic_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--subjects", type=int, default=5000)
    parser.add_argument("--queries", type=int, default=100)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument(
        "--search-k", type=int, nargs="+", default=[100, 1000, 10000, 50000]
    )
    parser.add_argument("--n-trees", type=int, nargs="+", default=[10, 50, 100])
    parser.add_argument("--leaf-size", type=int, default=16)
    args = parser.parse_args()

    documents, subjects = synthetic_corpus(args.queries, args.subjects, seed=args.seed)
    embedder = EmbedderConfig(kind="hash", dim=args.dim, seed=args.seed)
    subject_matrix = embed_corpus(
        embedder, [(s.code, render_subject_text(s)) for s in subjects], "subject"
    )
    doc_matrix = embed_corpus(
        embedder, [(d.id, render_document_text(d)) for d in documents], "document"
    )
    oracle = [
        {c.subject_code for c in exact_topk(subject_matrix, doc_matrix.vectors[row], args.k)}
        for row in range(args.queries)
    ]

    print(f"{'n_trees':>8} {'search_k':>9} {'overlap':>8} {'ms/query':>9} {'build_s':>8}")
    for n_trees in args.n_trees:
        started = time.perf_counter()
        forest = build_forest(
            subject_matrix,
            IndexConfig(n_trees=n_trees, leaf_size=args.leaf_size, seed=args.seed),
        )
        build_seconds = time.perf_counter() - started
        query(forest, doc_matrix.vectors[0], args.k, args.search_k[0])  # warm up
        for search_k in args.search_k:
            started = time.perf_counter()
            overlaps = []
            for row in range(args.queries):
                got = {
                    c.subject_code
                    for c in query(forest, doc_matrix.vectors[row], args.k, search_k)
                }
                overlaps.append(len(got & oracle[row]) / args.k)
            elapsed = (time.perf_counter() - started) * 1000 / args.queries
            print(
                f"{n_trees:>8} {search_k:>9} {np.mean(overlaps):>8.4f} "
                f"{elapsed:>9.2f} {build_seconds:>8.2f}"
            )


if __name__ == "__main__":
    main()
