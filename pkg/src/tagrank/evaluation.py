"""Recall@k evaluation of ranked runs and side-by-side run comparison."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Collection, Sequence

from .corpus import Document
from .errors import InputError
from .pipeline import RankedRun

DEFAULT_CUTOFFS = (5, 10, 15, 20, 25, 30, 35, 40, 45, 50)


@dataclass(frozen=True)
class EvalReport:
    run_id: str
    cutoffs: tuple[int, ...]
    avg_recall: dict[int, float]
    n_docs_evaluated: int
    n_docs_skipped: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "run_id": self.run_id,
                "cutoffs": list(self.cutoffs),
                "avg_recall": {str(k): self.avg_recall[k] for k in self.cutoffs},
                "n_docs_evaluated": self.n_docs_evaluated,
                "n_docs_skipped": self.n_docs_skipped,
            },
            sort_keys=True,
            indent=2,
        )

    def render_text(self) -> str:
        width = max(len(self.run_id), 10)
        lines = [f"{'Recall at k':<12} {self.run_id:>{width}}"]
        for k in self.cutoffs:
            lines.append(f"{k:<12} {self.avg_recall[k]:>{width}.4f}")
        lines.append(
            f"(documents evaluated: {self.n_docs_evaluated}, "
            f"skipped without gold: {self.n_docs_skipped})"
        )
        return "\n".join(lines)


def recall_at_k(ranked: Sequence[str], gold: Collection[str], k: int) -> float:
    """Fraction of gold codes present in the top-k of a ranked list."""
    if k < 1:
        raise InputError("k must be >= 1")
    gold_set = set(gold)
    if not gold_set:
        raise InputError("recall is undefined for an empty gold set")
    hits = len(set(ranked[:k]) & gold_set)
    return hits / len(gold_set)


def evaluate_run(
    run: RankedRun, docs: Sequence[Document], cutoffs: Sequence[int] | None = None
) -> EvalReport:
    """Unweighted mean recall@k over documents with non-empty gold sets."""
    cutoffs = tuple(cutoffs) if cutoffs is not None else DEFAULT_CUTOFFS
    if not cutoffs or any(k < 1 for k in cutoffs):
        raise InputError("cutoffs must be positive")
    docs_by_id = {d.id: d for d in docs}
    totals = {k: 0.0 for k in cutoffs}
    evaluated = 0
    skipped = 0
    for doc_id, ranked in run.entries.items():
        doc = docs_by_id.get(doc_id)
        if doc is None:
            raise InputError(f"run references unknown document {doc_id!r}")
        gold = set(doc.gold_subjects)
        if not gold:
            skipped += 1
            continue
        evaluated += 1
        codes = [code for code, _ in ranked]
        for k in cutoffs:
            totals[k] += recall_at_k(codes, gold, k)
    avg = {k: (totals[k] / evaluated if evaluated else 0.0) for k in cutoffs}
    return EvalReport(
        run_id=run.run_id,
        cutoffs=cutoffs,
        avg_recall=avg,
        n_docs_evaluated=evaluated,
        n_docs_skipped=skipped,
    )


@dataclass(frozen=True)
class RunComparison:
    run_a: str
    run_b: str
    cutoffs: tuple[int, ...]
    rows: tuple[tuple[int, float, float, float, float | None], ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "run_a": self.run_a,
                "run_b": self.run_b,
                "cutoffs": list(self.cutoffs),
                "rows": [
                    {
                        "k": k,
                        "a": a,
                        "b": b,
                        "delta": delta,
                        "relative": relative,
                    }
                    for k, a, b, delta, relative in self.rows
                ],
            },
            sort_keys=True,
            indent=2,
        )

    def render_text(self) -> str:
        col_a = max(len(self.run_a), 8)
        col_b = max(len(self.run_b), 8)
        lines = [
            f"{'k':<4} {self.run_a:>{col_a}} {self.run_b:>{col_b}} "
            f"{'delta':>8} {'relative':>9}"
        ]
        for k, a, b, delta, relative in self.rows:
            rel = f"{relative * 100:+.1f}%" if relative is not None else "n/a"
            lines.append(
                f"{k:<4} {a:>{col_a}.4f} {b:>{col_b}.4f} {delta:>+8.4f} {rel:>9}"
            )
        return "\n".join(lines)


def compare_runs(a: EvalReport, b: EvalReport) -> RunComparison:
    """Per-cutoff values of two reports with absolute and relative deltas."""
    if a.cutoffs != b.cutoffs:
        raise InputError(
            f"cutoff grids differ: {list(a.cutoffs)} vs {list(b.cutoffs)}"
        )
    rows = []
    for k in a.cutoffs:
        value_a = a.avg_recall[k]
        value_b = b.avg_recall[k]
        delta = value_b - value_a
        relative = (delta / value_a) if value_a != 0.0 else (0.0 if delta == 0.0 else None)
        rows.append((k, value_a, value_b, delta, relative))
    return RunComparison(
        run_a=a.run_id, run_b=b.run_id, cutoffs=a.cutoffs, rows=tuple(rows)
    )
