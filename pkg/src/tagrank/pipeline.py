"""Two-stage retrieval: ANN candidates, then pair-scorer re-ranking.

Stage 1 queries the forest for ``n_candidates`` subjects per document.
Stage 2 scores (document text, subject text) pairs with a pluggable
scorer and re-orders the candidates. Score ties fall back to the stage-1
rank, so the ``passthrough`` scorer reproduces stage-1 order exactly.

Also generates the labeled document-subject pairs used to train a remote
pair scorer: one positive per gold link, plus uniformly sampled
non-gold negatives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import requests

from .ann import Candidate, RPForest, query
from .corpus import Document, Subject, render_document_text, render_subject_text
from .errors import FormatError, InputError, ProtocolError, TagrankError, TransportError
from .embedding import EmbeddingMatrix, char_trigrams

SCORER_KINDS = ("passthrough", "lexical", "remote", "oracle")

_SEED_MASK = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class ScorerConfig:
    kind: str = "passthrough"
    endpoint: str | None = None
    batch_size: int = 64

    def validate(self) -> None:
        if self.kind not in SCORER_KINDS:
            raise InputError(f"unknown scorer kind {self.kind!r}")
        if self.batch_size < 1:
            raise InputError("batch_size must be positive")
        if self.kind == "remote" and not self.endpoint:
            raise InputError("remote scorer requires an endpoint URL")


@dataclass(frozen=True)
class PipelineConfig:
    n_candidates: int = 512
    search_k: int = 50000
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    output_k: int = 50

    def validate(self) -> None:
        if self.n_candidates < 1:
            raise InputError("n_candidates must be positive")
        if self.search_k < 1:
            raise InputError("search_k must be positive")
        if self.output_k < 1:
            raise InputError("output_k must be positive")
        if self.output_k > self.n_candidates:
            raise InputError("output_k must not exceed n_candidates")
        self.scorer.validate()


@dataclass
class RankedRun:
    """Per-document ranked (subject_code, score) lists for one configuration."""

    run_id: str
    stage: str
    entries: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    failures: list[tuple[str, str]] = field(default_factory=list)


@dataclass(frozen=True)
class LabeledPair:
    doc_id: str
    subject_code: str
    doc_text: str
    subject_text: str
    label: int


def lexical_score(a: str, b: str) -> float:
    """Jaccard similarity of boundary-padded lowercase character 3-gram sets."""
    if not a.strip() or not b.strip():
        raise InputError("lexical_score requires non-empty texts")
    grams_a = set(char_trigrams(a.strip()))
    grams_b = set(char_trigrams(b.strip()))
    union = grams_a | grams_b
    return len(grams_a & grams_b) / len(union)


def _remote_scores(
    endpoint: str,
    pairs: Sequence[tuple[str, str]],
    batch_size: int,
    timeout: float = 60.0,
) -> list[float]:
    out: list[float] = []
    for batch_index, start in enumerate(range(0, len(pairs), batch_size)):
        batch = pairs[start : start + batch_size]
        payload = {"pairs": [{"left": a, "right": b} for a, b in batch]}
        try:
            response = requests.post(f"{endpoint}/score", json=payload, timeout=timeout)
        except requests.RequestException as exc:
            raise TransportError(
                f"score request to {endpoint} failed: {exc}", batch_index=batch_index
            ) from exc
        if not 200 <= response.status_code < 300:
            raise TransportError(
                f"score endpoint returned HTTP {response.status_code}: "
                f"{response.text[:200]}",
                batch_index=batch_index,
            )
        try:
            scores = response.json()["scores"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed score response: {exc}") from exc
        if not isinstance(scores, list) or len(scores) != len(batch):
            raise ProtocolError(
                f"score response has {len(scores) if isinstance(scores, list) else '?'} "
                f"scores for {len(batch)} pairs"
            )
        for value in scores:
            if not isinstance(value, (int, float)) or not 0.0 <= float(value) <= 1.0:
                raise ProtocolError(f"score {value!r} outside [0, 1]")
            out.append(float(value))
    return out


def score_pairs(
    scorer: ScorerConfig,
    pairs: Sequence[tuple[str, str]],
    labels: Sequence[int] | None = None,
) -> list[float]:
    """One relevance score in [0, 1] per (left text, right text) pair.

    The ``oracle`` kind replays gold labels and therefore requires them;
    it exists for tests and recall-ceiling measurements only.
    """
    scorer.validate()
    if not pairs:
        return []
    for a, b in pairs:
        if not a.strip() or not b.strip():
            raise InputError("cannot score empty pair texts")
    if scorer.kind == "passthrough":
        return [0.5] * len(pairs)
    if scorer.kind == "lexical":
        return [lexical_score(a, b) for a, b in pairs]
    if scorer.kind == "oracle":
        if labels is None:
            raise InputError("oracle scorer requires gold labels")
        if len(labels) != len(pairs):
            raise InputError("labels must align with pairs")
        return [1.0 if label else 0.0 for label in labels]
    return _remote_scores(scorer.endpoint, pairs, scorer.batch_size)


def retrieve_candidates(
    doc_vec: np.ndarray, forest: RPForest, cfg: PipelineConfig
) -> list[Candidate]:
    """Stage-1 candidates for one document vector."""
    cfg.validate()
    return query(forest, doc_vec, cfg.n_candidates, cfg.search_k)


def rerank(
    doc: Document,
    candidates: Sequence[Candidate],
    scorer: ScorerConfig,
    cfg: PipelineConfig,
    subject_texts: Mapping[str, str],
) -> list[tuple[str, float]]:
    """Stage 2: score candidate pairs and re-order.

    Sorts by (score desc, stage-1 rank asc, subject code asc) and keeps
    the top ``output_k``. The output is always a subset of the candidate
    set; re-ranking can never recover a subject stage 1 missed.
    """
    if not candidates:
        raise InputError(f"no candidates to rerank for document {doc.id!r}")
    doc_text = render_document_text(doc)
    pairs = []
    for candidate in candidates:
        text = subject_texts.get(candidate.subject_code)
        if text is None:
            raise InputError(
                f"no rendered text for candidate subject {candidate.subject_code!r}"
            )
        pairs.append((doc_text, text))
    labels = None
    if scorer.kind == "oracle":
        gold = set(doc.gold_subjects)
        labels = [1 if c.subject_code in gold else 0 for c in candidates]
    scores = score_pairs(scorer, pairs, labels)
    order = sorted(
        range(len(candidates)),
        key=lambda i: (-scores[i], candidates[i].rank, candidates[i].subject_code),
    )
    return [
        (candidates[i].subject_code, float(scores[i])) for i in order[: cfg.output_k]
    ]


def generate_training_pairs(
    docs: Sequence[Document],
    subjects: Sequence[Subject],
    negatives_per_positive: int,
    seed: int,
) -> list[LabeledPair]:
    """Positive pairs from gold links plus seeded uniform negatives.

    Negatives are drawn per document without replacement from the
    subjects outside that document's gold set; documents without gold
    links contribute nothing.
    """
    if negatives_per_positive < 1:
        raise InputError("negatives_per_positive must be positive")
    subject_text = {s.code: render_subject_text(s) for s in subjects}
    codes = [s.code for s in subjects]
    rng = np.random.default_rng(seed & _SEED_MASK)
    out: list[LabeledPair] = []
    for doc in docs:
        gold: list[str] = []
        seen: set[str] = set()
        for code in doc.gold_subjects:
            if code not in seen:
                seen.add(code)
                gold.append(code)
        if not gold:
            continue
        for code in gold:
            if code not in subject_text:
                raise InputError(
                    f"document {doc.id!r} has unknown gold code {code!r}"
                )
        non_gold = [c for c in codes if c not in seen]
        needed = len(gold) * negatives_per_positive
        if needed > len(non_gold):
            raise InputError(
                f"document {doc.id!r} needs {needed} negatives but only "
                f"{len(non_gold)} non-gold subjects exist"
            )
        sampled = rng.choice(len(non_gold), size=needed, replace=False)
        doc_text = render_document_text(doc)
        for i, code in enumerate(gold):
            out.append(LabeledPair(doc.id, code, doc_text, subject_text[code], 1))
            for j in range(negatives_per_positive):
                negative = non_gold[int(sampled[i * negatives_per_positive + j])]
                out.append(
                    LabeledPair(doc.id, negative, doc_text, subject_text[negative], 0)
                )
    return out


def save_pairs(pairs: Sequence[LabeledPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(
                json.dumps(
                    {
                        "doc_id": pair.doc_id,
                        "subject_code": pair.subject_code,
                        "doc_text": pair.doc_text,
                        "subject_text": pair.subject_text,
                        "label": pair.label,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def run_pipeline(
    docs: Sequence[Document],
    subjects: Sequence[Subject],
    doc_matrix: EmbeddingMatrix,
    forest: RPForest,
    cfg: PipelineConfig,
    run_id: str = "run",
) -> tuple[RankedRun, RankedRun]:
    """Produce the stage-1 run and the two-stage run for a whole corpus.

    Documents are processed in matrix row order. A scorer failure aborts
    re-ranking for that document only; it is recorded on the two-stage
    run and the stage-1 entry is kept.
    """
    cfg.validate()
    docs_by_id = {d.id: d for d in docs}
    subject_texts = {s.code: render_subject_text(s) for s in subjects}
    missing = [i for i in forest.item_ids if i not in subject_texts]
    if missing:
        raise InputError(
            f"forest indexes {len(missing)} subjects missing from the taxonomy, "
            f"first: {missing[0]!r}"
        )
    stage1 = RankedRun(run_id=f"{run_id}-stage1", stage="stage1")
    two_stage = RankedRun(run_id=f"{run_id}-two_stage", stage="two_stage")
    for row, doc_id in enumerate(doc_matrix.ids):
        doc = docs_by_id.get(doc_id)
        if doc is None:
            raise InputError(f"document matrix row {doc_id!r} not in the corpus")
        candidates = retrieve_candidates(doc_matrix.vectors[row], forest, cfg)
        stage1.entries[doc_id] = [
            (c.subject_code, float(c.score)) for c in candidates[: cfg.output_k]
        ]
        try:
            two_stage.entries[doc_id] = rerank(
                doc, candidates, cfg.scorer, cfg, subject_texts
            )
        except TagrankError as exc:
            two_stage.failures.append((doc_id, f"{type(exc).__name__}: {exc}"))
    return stage1, two_stage


def run_summary_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".summary.json")


def save_run(run: RankedRun, path: str | Path) -> None:
    """Write the run as line-delimited JSON plus a sidecar summary."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for doc_id, ranked in run.entries.items():
            handle.write(
                json.dumps(
                    {
                        "doc_id": doc_id,
                        "ranked": [
                            {"subject": code, "score": round(score, 6)}
                            for code, score in ranked
                        ],
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
    summary = {
        "run_id": run.run_id,
        "stage": run.stage,
        "n_docs": len(run.entries),
        "failures": [
            {"doc_id": doc_id, "error": message} for doc_id, message in run.failures
        ],
    }
    run_summary_path(path).write_text(
        json.dumps(summary, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def load_run(path: str | Path) -> RankedRun:
    path = Path(path)
    summary_path = run_summary_path(path)
    if not summary_path.exists():
        raise FormatError(f"missing run summary {summary_path}")
    try:
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        run = RankedRun(run_id=summary["run_id"], stage=summary["stage"])
        run.failures = [(f["doc_id"], f["error"]) for f in summary.get("failures", [])]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{summary_path}: malformed summary: {exc}") from exc
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc_id = obj["doc_id"]
                ranked = [(r["subject"], float(r["score"])) for r in obj["ranked"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}: line {number}: malformed entry") from exc
            if doc_id in run.entries:
                raise FormatError(f"{path}: line {number}: duplicate doc_id {doc_id!r}")
            run.entries[doc_id] = ranked
    return run
