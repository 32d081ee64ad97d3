#!/usr/bin/env python3
"""Write a synthetic docs.jsonl / subjects.jsonl pair for demos and benchmarks."""

import argparse

from tagrank.corpus import save_documents, save_subjects
from tagrank.synth import synthetic_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=200)
    parser.add_argument("--subjects", type=int, default=300)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--noise-words", type=int, default=3)
    parser.add_argument("--docs-out", default="docs.jsonl")
    parser.add_argument("--subjects-out", default="subjects.jsonl")
    args = parser.parse_args()

    documents, subjects = synthetic_corpus(
        args.docs, args.subjects, seed=args.seed, noise_words=args.noise_words
    )
    save_documents(documents, args.docs_out)
    save_subjects(subjects, args.subjects_out)
    print(
        f"wrote {len(documents)} documents -> {args.docs_out}, "
        f"{len(subjects)} subjects -> {args.subjects_out}"
    )


if __name__ == "__main__":
    main()
