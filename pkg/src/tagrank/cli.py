"""Command-line entry point wiring the full workflow.

Subcommands mirror the pipeline stages: ``embed`` renders and encodes the
corpus, ``index`` builds the forest, ``retrieve`` writes the stage-1 run,
``rerank`` writes the two-stage run, ``gen-pairs`` emits scorer training
pairs, and ``eval`` scores runs (optionally comparing two).

Configuration comes from an optional JSON file plus flags; flags win.
Exit codes: 0 success, 1 input/validation error, 2 transport/protocol
error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import ann, corpus, embedding, evaluation, pipeline
from .errors import (
    EXIT_INPUT,
    EXIT_INTERNAL,
    EXIT_OK,
    EXIT_TRANSPORT,
    InputError,
    TagrankError,
)


@dataclass(frozen=True)
class RunPaths:
    docs: str = "docs.jsonl"
    subjects: str = "subjects.jsonl"
    doc_matrix: str = "docs.emb"
    subject_matrix: str = "subjects.emb"
    forest: str = "subjects.rpf"
    stage1_run: str = "stage1.jsonl"
    two_stage_run: str = "two_stage.jsonl"
    pairs: str = "pairs.jsonl"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    paths: RunPaths = field(default_factory=RunPaths)
    embedder: embedding.EmbedderConfig = field(default_factory=embedding.EmbedderConfig)
    index: ann.IndexConfig = field(default_factory=ann.IndexConfig)
    pipeline: pipeline.PipelineConfig = field(default_factory=pipeline.PipelineConfig)
    cutoffs: tuple[int, ...] = evaluation.DEFAULT_CUTOFFS
    negatives_per_positive: int = 1


def _config_from_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"config {path} must be a JSON object")
    return data


def _build_config(args: argparse.Namespace) -> RunConfig:
    data = _config_from_file(getattr(args, "config", None))
    seed = args.seed if args.seed is not None else int(data.get("seed", 0))

    paths_data = dict(data.get("paths", {}))
    paths = RunPaths(**{k: str(v) for k, v in paths_data.items()})

    emb = dict(data.get("embedder", {}))
    embedder = embedding.EmbedderConfig(
        kind=getattr(args, "embedder", None) or emb.get("kind", "hash"),
        dim=getattr(args, "dim", None) or int(emb.get("dim", 256)),
        endpoint=getattr(args, "endpoint", None) or emb.get("endpoint"),
        batch_size=int(emb.get("batch_size", 128)),
        seed=int(emb.get("seed", seed)),
    )

    idx = dict(data.get("index", {}))
    index = ann.IndexConfig(
        n_trees=getattr(args, "n_trees", None) or int(idx.get("n_trees", 100)),
        leaf_size=getattr(args, "leaf_size", None) or int(idx.get("leaf_size", 16)),
        seed=int(idx.get("seed", seed)),
    )

    pipe = dict(data.get("pipeline", {}))
    scorer_data = dict(pipe.get("scorer", {}))
    scorer = pipeline.ScorerConfig(
        kind=getattr(args, "scorer", None) or scorer_data.get("kind", "passthrough"),
        endpoint=getattr(args, "endpoint", None) or scorer_data.get("endpoint"),
        batch_size=int(scorer_data.get("batch_size", 64)),
    )
    pipe_cfg = pipeline.PipelineConfig(
        n_candidates=getattr(args, "n_candidates", None)
        or int(pipe.get("n_candidates", 512)),
        search_k=getattr(args, "search_k", None) or int(pipe.get("search_k", 50000)),
        scorer=scorer,
        output_k=getattr(args, "output_k", None) or int(pipe.get("output_k", 50)),
    )

    cutoffs = getattr(args, "cutoffs", None)
    if cutoffs:
        cutoff_values = tuple(int(v) for v in cutoffs.split(","))
    else:
        cutoff_values = tuple(int(v) for v in data.get("cutoffs", evaluation.DEFAULT_CUTOFFS))

    negatives = getattr(args, "negatives", None) or int(
        data.get("negatives_per_positive", 1)
    )
    return RunConfig(
        seed=seed,
        paths=paths,
        embedder=embedder,
        index=index,
        pipeline=pipe_cfg,
        cutoffs=cutoff_values,
        negatives_per_positive=negatives,
    )


def _path(args: argparse.Namespace, flag: str, fallback: str) -> str:
    return getattr(args, flag, None) or fallback


def _load_corpus(cfg: RunConfig, args) -> tuple[list[corpus.Document], list[corpus.Subject]]:
    docs = corpus.load_documents(_path(args, "docs", cfg.paths.docs))
    subjects = corpus.load_subjects(_path(args, "subjects", cfg.paths.subjects))
    return docs, subjects


def cmd_embed(cfg: RunConfig, args: argparse.Namespace) -> int:
    docs, subjects = _load_corpus(cfg, args)
    report = corpus.validate(docs, subjects)
    if not report.is_valid:
        print(report.describe(), file=sys.stderr)
        return EXIT_INPUT
    doc_out = _path(args, "doc_matrix", cfg.paths.doc_matrix)
    subject_out = _path(args, "subject_matrix", cfg.paths.subject_matrix)
    doc_matrix = embedding.embed_corpus(
        cfg.embedder,
        [(d.id, corpus.render_document_text(d)) for d in docs],
        role="document",
    )
    subject_matrix = embedding.embed_corpus(
        cfg.embedder,
        [(s.code, corpus.render_subject_text(s)) for s in subjects],
        role="subject",
    )
    embedding.save_matrix(doc_matrix, doc_out)
    embedding.save_matrix(subject_matrix, subject_out)
    print(
        f"embedded {len(docs)} documents and {len(subjects)} subjects "
        f"(dim={doc_matrix.dim}) -> {doc_out} {subject_out}"
    )
    return EXIT_OK


def cmd_index(cfg: RunConfig, args: argparse.Namespace) -> int:
    matrix = embedding.load_matrix(_path(args, "subject_matrix", cfg.paths.subject_matrix))
    forest = ann.build_forest(matrix, cfg.index)
    out = getattr(args, "out", None) or cfg.paths.forest
    ann.save_forest(forest, out)
    print(
        f"indexed {forest.n_items} subjects: {cfg.index.n_trees} trees, "
        f"leaf_size={cfg.index.leaf_size}, seed={cfg.index.seed} -> {out}"
    )
    return EXIT_OK


def _check_forest_matrix(forest: ann.RPForest, matrix: embedding.EmbeddingMatrix, path: str) -> None:
    if forest.item_ids != matrix.ids:
        detail = (
            "same count but different ids"
            if len(forest.item_ids) == len(matrix.ids)
            else "different item sets"
        )
        raise InputError(
            f"forest indexes {len(forest.item_ids)} items but subject matrix "
            f"{path} has {len(matrix.ids)} ids ({detail})"
        )


def cmd_retrieve(cfg: RunConfig, args: argparse.Namespace) -> int:
    forest = ann.load_forest(_path(args, "forest", cfg.paths.forest))
    subject_path = _path(args, "subject_matrix", cfg.paths.subject_matrix)
    _check_forest_matrix(forest, embedding.load_matrix(subject_path), subject_path)
    doc_matrix = embedding.load_matrix(_path(args, "doc_matrix", cfg.paths.doc_matrix))
    if doc_matrix.dim != forest.dim:
        raise InputError(
            f"document matrix dim {doc_matrix.dim} does not match forest dim {forest.dim}"
        )
    run = pipeline.RankedRun(run_id=getattr(args, "run_id", None) or "stage1", stage="stage1")
    for row, doc_id in enumerate(doc_matrix.ids):
        candidates = pipeline.retrieve_candidates(
            doc_matrix.vectors[row], forest, cfg.pipeline
        )
        run.entries[doc_id] = [
            (c.subject_code, float(c.score)) for c in candidates[: cfg.pipeline.output_k]
        ]
    out = getattr(args, "out", None) or cfg.paths.stage1_run
    pipeline.save_run(run, out)
    print(
        f"stage1: {len(run.entries)} documents, k<={cfg.pipeline.output_k}, "
        f"search_k={cfg.pipeline.search_k} -> {out}"
    )
    return EXIT_OK


def cmd_rerank(cfg: RunConfig, args: argparse.Namespace) -> int:
    docs, subjects = _load_corpus(cfg, args)
    forest = ann.load_forest(_path(args, "forest", cfg.paths.forest))
    doc_matrix = embedding.load_matrix(_path(args, "doc_matrix", cfg.paths.doc_matrix))
    run_id = getattr(args, "run_id", None) or "two_stage"
    _, two_stage = pipeline.run_pipeline(
        docs, subjects, doc_matrix, forest, cfg.pipeline, run_id=run_id
    )
    two_stage.run_id = run_id
    out = getattr(args, "out", None) or cfg.paths.two_stage_run
    pipeline.save_run(two_stage, out)
    print(
        f"two_stage({cfg.pipeline.scorer.kind}): {len(two_stage.entries)} documents, "
        f"{len(two_stage.failures)} failures -> {out}"
    )
    if two_stage.failures:
        for doc_id, message in two_stage.failures:
            print(f"failed {doc_id}: {message}", file=sys.stderr)
        transported = any(
            message.startswith(("TransportError", "ProtocolError"))
            for _, message in two_stage.failures
        )
        return EXIT_TRANSPORT if transported else EXIT_INPUT
    return EXIT_OK


def cmd_gen_pairs(cfg: RunConfig, args: argparse.Namespace) -> int:
    docs, subjects = _load_corpus(cfg, args)
    pairs = pipeline.generate_training_pairs(
        docs, subjects, cfg.negatives_per_positive, cfg.seed
    )
    out = getattr(args, "out", None) or cfg.paths.pairs
    pipeline.save_pairs(pairs, out)
    positives = sum(1 for p in pairs if p.label == 1)
    print(f"pairs: {positives} positive, {len(pairs) - positives} negative -> {out}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args: argparse.Namespace) -> int:
    docs, _ = _load_corpus(cfg, args)
    run = pipeline.load_run(args.run)
    report = evaluation.evaluate_run(run, docs, cfg.cutoffs)
    if args.compare:
        other = evaluation.evaluate_run(pipeline.load_run(args.compare), docs, cfg.cutoffs)
        comparison = evaluation.compare_runs(report, other)
        rendered = comparison.to_json() if args.format == "json" else comparison.render_text()
    else:
        rendered = report.to_json() if args.format == "json" else report.render_text()
    print(rendered)
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(rendered + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagrank",
        description="Two-stage subject tagging: ANN retrieval plus pair-scorer re-ranking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, help="global random seed")
        p.add_argument("--out", help="output path for the command's artifact")

    p = sub.add_parser("embed", help="render corpus texts and write embedding matrices")
    common(p)
    p.add_argument("--docs")
    p.add_argument("--subjects")
    p.add_argument("--doc-matrix", dest="doc_matrix")
    p.add_argument("--subject-matrix", dest="subject_matrix")
    p.add_argument("--embedder", choices=["hash", "remote"])
    p.add_argument("--endpoint")
    p.add_argument("--dim", type=int)
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("index", help="build the subject forest")
    common(p)
    p.add_argument("--subject-matrix", dest="subject_matrix")
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--leaf-size", dest="leaf_size", type=int)
    p.set_defaults(handler=cmd_index)

    p = sub.add_parser("retrieve", help="write the stage-1 run")
    common(p)
    p.add_argument("--doc-matrix", dest="doc_matrix")
    p.add_argument("--subject-matrix", dest="subject_matrix")
    p.add_argument("--forest")
    p.add_argument("--n-candidates", dest="n_candidates", type=int)
    p.add_argument("--search-k", dest="search_k", type=int)
    p.add_argument("--output-k", dest="output_k", type=int)
    p.add_argument("--run-id", dest="run_id")
    p.set_defaults(handler=cmd_retrieve)

    p = sub.add_parser("rerank", help="write the two-stage run")
    common(p)
    p.add_argument("--docs")
    p.add_argument("--subjects")
    p.add_argument("--doc-matrix", dest="doc_matrix")
    p.add_argument("--forest")
    p.add_argument("--scorer", choices=list(pipeline.SCORER_KINDS))
    p.add_argument("--endpoint")
    p.add_argument("--n-candidates", dest="n_candidates", type=int)
    p.add_argument("--search-k", dest="search_k", type=int)
    p.add_argument("--output-k", dest="output_k", type=int)
    p.add_argument("--run-id", dest="run_id")
    p.set_defaults(handler=cmd_rerank)

    p = sub.add_parser("gen-pairs", help="write labeled scorer training pairs")
    common(p)
    p.add_argument("--docs")
    p.add_argument("--subjects")
    p.add_argument("--negatives", type=int, help="negatives per positive pair")
    p.set_defaults(handler=cmd_gen_pairs)

    p = sub.add_parser("eval", help="score a run; optionally compare two runs")
    common(p)
    p.add_argument("run", help="run file to evaluate")
    p.add_argument("--compare", help="second run file; emits a comparison table")
    p.add_argument("--docs")
    p.add_argument("--subjects")
    p.add_argument("--cutoffs", help="comma-separated k values")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(handler=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _build_config(args)
        return args.handler(cfg, args)
    except TagrankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - internal invariant violations
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
