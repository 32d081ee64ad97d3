"""Two-stage subject tagging: ANN candidate retrieval plus pair-scorer re-ranking."""

from .ann import (
    Candidate,
    IndexConfig,
    RPForest,
    build_forest,
    exact_topk,
    load_forest,
    query,
    save_forest,
)
from .corpus import (
    Document,
    Subject,
    ValidationReport,
    load_documents,
    load_subjects,
    parse_documents,
    parse_subjects,
    render_document_text,
    render_subject_text,
    validate,
)
from .embedding import (
    EmbedderConfig,
    EmbeddingMatrix,
    PromptConfig,
    embed_corpus,
    hash_embed,
    load_matrix,
    remote_embed,
    save_matrix,
)
from .evaluation import (
    DEFAULT_CUTOFFS,
    EvalReport,
    RunComparison,
    compare_runs,
    evaluate_run,
    recall_at_k,
)
from .pipeline import (
    LabeledPair,
    PipelineConfig,
    RankedRun,
    ScorerConfig,
    generate_training_pairs,
    lexical_score,
    load_run,
    rerank,
    retrieve_candidates,
    run_pipeline,
    save_pairs,
    save_run,
    score_pairs,
)

__version__ = "0.1.0"
