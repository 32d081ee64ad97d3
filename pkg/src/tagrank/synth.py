"""Deterministic synthetic corpora for tests, demos, and benchmarks.

Each subject owns a small pool of pseudo-words; its name and definition
are drawn from that pool. Documents sample gold subjects and build their
abstracts from the gold subjects' pools plus shared noise words, so
subject definitions share vocabulary with the abstracts of the documents
they tag. That gives both stages a learnable lexical signal whose
strength is tunable via the noise knobs.
"""

from __future__ import annotations

import numpy as np

from .corpus import Document, Subject

_SYLLABLES = (
    "ba", "ce", "di", "fo", "gu", "ha", "je", "ki", "lo", "mu",
    "na", "pe", "qi", "ro", "su", "ta", "ve", "wi", "xo", "yu",
    "za", "bri", "kor", "len", "mos", "tur",
)

_SEED_MASK = 0xFFFFFFFFFFFFFFFF


def _word_list(count: int) -> list[str]:
    """``count`` distinct pseudo-words, generated positionally."""
    base = len(_SYLLABLES)
    length = 2
    while base**length < count:
        length += 1
    words = []
    for i in range(count):
        value = i
        parts = []
        for _ in range(length):
            parts.append(_SYLLABLES[value % base])
            value //= base
        words.append("".join(parts))
    return words


def synthetic_corpus(
    n_docs: int,
    n_subjects: int,
    *,
    seed: int,
    gold_range: tuple[int, int] = (1, 4),
    pool_size: int = 8,
    n_common: int = 40,
    definition_words: tuple[int, int] = (5, 9),
    abstract_words_per_gold: int = 5,
    noise_words: int = 3,
    definition_rate: float = 1.0,
) -> tuple[list[Document], list[Subject]]:
    """Build a consistent corpus; fully determined by the arguments."""
    rng = np.random.default_rng(seed & _SEED_MASK)
    words = _word_list(n_common + n_subjects * pool_size)
    order = rng.permutation(len(words))
    common = [words[int(i)] for i in order[:n_common]]
    pools: list[list[str]] = []
    for s in range(n_subjects):
        start = n_common + s * pool_size
        pools.append([words[int(i)] for i in order[start : start + pool_size]])

    def pick(source: list[str], count: int) -> list[str]:
        return [source[int(i)] for i in rng.integers(0, len(source), size=count)]

    subjects = []
    for s in range(n_subjects):
        name = " ".join(pools[s][:2])
        definition = None
        if rng.random() < definition_rate:
            count = int(rng.integers(definition_words[0], definition_words[1] + 1))
            definition = " ".join(pick(pools[s], count) + pick(common, 2))
        subjects.append(Subject(code=f"s{s:05d}", name=name, definition=definition))

    docs = []
    for d in range(n_docs):
        n_gold = int(rng.integers(gold_range[0], gold_range[1] + 1))
        n_gold = min(n_gold, n_subjects)
        gold_idx = rng.choice(n_subjects, size=n_gold, replace=False)
        gold = [f"s{int(g):05d}" for g in gold_idx]
        title = " ".join(pick(pools[int(gold_idx[0])], 2) + pick(common, 1))
        parts: list[str] = []
        for g in gold_idx:
            parts.extend(pick(pools[int(g)], abstract_words_per_gold))
        parts.extend(pick(common, noise_words))
        docs.append(
            Document(
                id=f"d{d:05d}",
                title=title,
                abstract=" ".join(parts),
                language="de" if rng.random() < 0.5 else "en",
                gold_subjects=tuple(gold),
            )
        )
    return docs, subjects
