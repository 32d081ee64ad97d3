"""Synthetic labeled pairs where lexical overlap predicts the label.

Positive pairs take the right-hand text from the left-hand text's words;
negative pairs draw the right-hand text from a disjoint vocabulary. Used
by the tests and by the tiny offline fixture models' vocabulary.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

TOPIC_WORDS = [f"topic{i:02d}" for i in range(40)]
NEGATIVE_WORDS = [f"offtopic{i:02d}" for i in range(40)]
COMMON_WORDS = [f"filler{i:02d}" for i in range(20)]


def vocabulary() -> list[str]:
    return TOPIC_WORDS + NEGATIVE_WORDS + COMMON_WORDS


def separable_pairs(n: int, seed: int = 0) -> list[dict]:
    """Balanced pair records in the engine's pair-file schema."""
    rng = random.Random(seed)
    records = []
    for i in range(n):
        doc_topics = rng.sample(TOPIC_WORDS, 6)
        doc_words = doc_topics + rng.sample(COMMON_WORDS, 3)
        rng.shuffle(doc_words)
        if i % 2 == 0:
            subject_text = " ".join(rng.sample(doc_topics, 3))
            label = 1
        else:
            subject_text = " ".join(rng.sample(NEGATIVE_WORDS, 3))
            label = 0
        records.append(
            {
                "doc_id": f"d{i:05d}",
                "subject_code": f"s{i:05d}",
                "doc_text": " ".join(doc_words),
                "subject_text": subject_text,
                "label": label,
            }
        )
    return records


def write_pair_file(records: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
