import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tagrank.ann import Candidate, IndexConfig, build_forest, exact_topk
from tagrank.corpus import Document, Subject, render_document_text, render_subject_text
from tagrank.embedding import EmbedderConfig, embed_corpus
from tagrank.errors import InputError, ProtocolError, TransportError
from tagrank.pipeline import (
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
    save_run,
    score_pairs,
)


def test_lexical_score_identity_and_disjoint():
    assert lexical_score("same words", "same words") == 1.0
    assert lexical_score("aaa", "zzz") == 0.0


def test_lexical_score_hand_enumerated():
    # "#abcd#" -> {#ab, abc, bcd, cd#}; "#bcde#" -> {#bc, bcd, cde, de#}
    # intersection {bcd}, union of 7 distinct grams.
    assert lexical_score("abcd", "bcde") == pytest.approx(1 / 7)


def test_lexical_score_case_insensitive_set_semantics():
    assert lexical_score("AbCd", "abcd") == 1.0
    assert lexical_score("abcabc", "abc") < 1.0  # extra grams from repetition


@settings(max_examples=100)
@given(
    st.text(min_size=1, max_size=20).filter(lambda s: bool(s.strip())),
    st.text(min_size=1, max_size=20).filter(lambda s: bool(s.strip())),
)
def test_lexical_score_symmetric(a, b):
    assert lexical_score(a, b) == lexical_score(b, a)
    assert 0.0 <= lexical_score(a, b) <= 1.0


def test_score_pairs_passthrough_and_oracle():
    pairs = [("doc one", "subj one"), ("doc two", "subj two")]
    assert score_pairs(ScorerConfig(kind="passthrough"), pairs) == [0.5, 0.5]
    oracle = ScorerConfig(kind="oracle")
    assert score_pairs(oracle, pairs, labels=[1, 0]) == [1.0, 0.0]
    with pytest.raises(InputError, match="gold"):
        score_pairs(oracle, pairs)


def test_score_pairs_empty_and_validation():
    assert score_pairs(ScorerConfig(kind="lexical"), []) == []
    with pytest.raises(InputError):
        score_pairs(ScorerConfig(kind="lexical"), [("", "x")])
    with pytest.raises(InputError):
        score_pairs(ScorerConfig(kind="bogus"), [("a", "b")])


def test_score_pairs_remote(stub_service):
    stub_service.score_handler = lambda body: (
        200,
        {"scores": [0.25] * len(body["pairs"])},
    )
    cfg = ScorerConfig(kind="remote", endpoint=stub_service.url, batch_size=2)
    out = score_pairs(cfg, [("a", "b"), ("c", "d"), ("e", "f")])
    assert out == [0.25, 0.25, 0.25]
    assert len(stub_service.requests) == 2
    assert stub_service.requests[0][1] == {
        "pairs": [{"left": "a", "right": "b"}, {"left": "c", "right": "d"}]
    }


def test_score_pairs_remote_rejects_out_of_range(stub_service):
    stub_service.score_handler = lambda body: (200, {"scores": [1.5]})
    cfg = ScorerConfig(kind="remote", endpoint=stub_service.url)
    with pytest.raises(ProtocolError, match=r"\[0, 1\]"):
        score_pairs(cfg, [("a", "b")])


def test_score_pairs_remote_transport_error(stub_service):
    stub_service.score_handler = lambda body: (503, {"error": "down"})
    cfg = ScorerConfig(kind="remote", endpoint=stub_service.url)
    with pytest.raises(TransportError):
        score_pairs(cfg, [("a", "b")])


def _candidates(codes):
    return [
        Candidate(subject_code=code, score=1.0 - 0.01 * i, rank=i + 1)
        for i, code in enumerate(codes)
    ]


def test_rerank_passthrough_preserves_stage1_order():
    doc = Document(id="d", title="anything at all")
    codes = [f"s{i:02d}" for i in range(10)]
    texts = {c: f"text {c}" for c in codes}
    out = rerank(
        doc,
        _candidates(codes),
        ScorerConfig(kind="passthrough"),
        PipelineConfig(n_candidates=10, output_k=10),
        texts,
    )
    assert [code for code, _ in out] == codes
    assert all(score == 0.5 for _, score in out)


def test_rerank_oracle_puts_gold_on_top():
    codes = [f"s{i:02d}" for i in range(8)]
    doc = Document(id="d", title="t", gold_subjects=("s05", "s07"))
    texts = {c: f"text {c}" for c in codes}
    out = rerank(
        doc,
        _candidates(codes),
        ScorerConfig(kind="oracle"),
        PipelineConfig(n_candidates=8, output_k=8),
        texts,
    )
    assert {code for code, _ in out[:2]} == {"s05", "s07"}
    # Non-gold keep stage-1 relative order below the gold block.
    assert [code for code, _ in out[2:]] == ["s00", "s01", "s02", "s03", "s04", "s06"]


def test_rerank_lexical_promotes_buried_gold():
    # Gold subject shares the abstract's wording but sits at stage-1 rank 40.
    doc = Document(
        id="d",
        title="measuring seismic resilience",
        abstract="retrofitting masonry buildings against strong earthquakes",
        gold_subjects=("gold",),
    )
    codes = [f"filler{i:02d}" for i in range(39)] + ["gold"] + [
        f"filler{i:02d}" for i in range(39, 49)
    ]
    texts = {c: f"unrelated wording number {i}" for i, c in enumerate(codes)}
    texts["gold"] = "retrofitting masonry buildings against earthquakes"
    out = rerank(
        doc,
        _candidates(codes),
        ScorerConfig(kind="lexical"),
        PipelineConfig(n_candidates=50, output_k=50),
        texts,
    )
    positions = [code for code, _ in out]
    assert _candidates(codes)[39].subject_code == "gold"
    assert positions.index("gold") < 5


def test_rerank_truncates_to_output_k_subset_of_candidates():
    codes = [f"s{i:02d}" for i in range(20)]
    doc = Document(id="d", title="t")
    texts = {c: f"text {c}" for c in codes}
    out = rerank(
        doc,
        _candidates(codes),
        ScorerConfig(kind="lexical"),
        PipelineConfig(n_candidates=20, output_k=5),
        texts,
    )
    assert len(out) == 5
    assert {code for code, _ in out} <= set(codes)


def test_rerank_missing_subject_text_is_input_error():
    doc = Document(id="d", title="t")
    with pytest.raises(InputError, match="s01"):
        rerank(
            doc,
            _candidates(["s00", "s01"]),
            ScorerConfig(kind="lexical"),
            PipelineConfig(n_candidates=2, output_k=2),
            {"s00": "text"},
        )


def _pair_fixture():
    subjects = [Subject(code=f"s{i}", name=f"name {i}") for i in range(6)]
    docs = [
        Document(id="d1", title="one", gold_subjects=("s0", "s3")),
        Document(id="d2", title="two", gold_subjects=("s5",)),
    ]
    return docs, subjects


def test_generate_pairs_counts_and_no_gold_negatives():
    docs, subjects = _pair_fixture()
    pairs = generate_training_pairs(docs[:1], subjects, 1, seed=9)
    assert len(pairs) == 4
    positives = [p for p in pairs if p.label == 1]
    negatives = [p for p in pairs if p.label == 0]
    assert {p.subject_code for p in positives} == {"s0", "s3"}
    assert all(p.subject_code not in ("s0", "s3") for p in negatives)
    assert len({p.subject_code for p in negatives}) == 2  # without replacement


def test_generate_pairs_deterministic():
    docs, subjects = _pair_fixture()
    assert generate_training_pairs(docs, subjects, 2, seed=7) == generate_training_pairs(
        docs, subjects, 2, seed=7
    )
    assert generate_training_pairs(docs, subjects, 2, seed=7) != generate_training_pairs(
        docs, subjects, 2, seed=8
    )


def test_generate_pairs_ratio_counts(small_corpus):
    docs, subjects = small_corpus
    docs = docs[:100]
    pairs = generate_training_pairs(docs, subjects, 3, seed=1)
    links = sum(len(set(d.gold_subjects)) for d in docs)
    assert len(pairs) == 4 * links
    assert sum(1 for p in pairs if p.label == 1) == links
    assert sum(1 for p in pairs if p.label == 0) == 3 * links
    for pair in pairs[:20]:
        assert pair.doc_text
        assert pair.subject_text


def test_generate_pairs_too_many_negatives_names_doc():
    docs, subjects = _pair_fixture()
    with pytest.raises(InputError, match="d1"):
        generate_training_pairs(docs, subjects, 3, seed=0)


def test_generate_pairs_rejects_unknown_gold():
    docs = [Document(id="d1", title="t", gold_subjects=("ghost",))]
    subjects = [Subject(code="s0", name="n")]
    with pytest.raises(InputError, match="ghost"):
        generate_training_pairs(docs, subjects, 1, seed=0)


@pytest.fixture(scope="module")
def small_stack(small_corpus):
    docs, subjects = small_corpus
    embedder = EmbedderConfig(kind="hash", dim=64, seed=7)
    doc_matrix = embed_corpus(
        embedder, [(d.id, render_document_text(d)) for d in docs], "document"
    )
    subject_matrix = embed_corpus(
        embedder, [(s.code, render_subject_text(s)) for s in subjects], "subject"
    )
    forest = build_forest(subject_matrix, IndexConfig(n_trees=20, leaf_size=16, seed=7))
    return docs, subjects, doc_matrix, subject_matrix, forest


def test_retrieve_candidates_clamps_to_taxonomy(small_stack):
    docs, subjects, doc_matrix, _, forest = small_stack
    cfg = PipelineConfig(n_candidates=512, search_k=50000, output_k=50)
    out = retrieve_candidates(doc_matrix.vectors[0], forest, cfg)
    assert len(out) == len(subjects)  # 300 < 512, clamped


def test_retrieve_candidates_exact_match_first(small_stack):
    _, _, _, subject_matrix, forest = small_stack
    cfg = PipelineConfig(n_candidates=5, search_k=10**6, output_k=5)
    out = retrieve_candidates(subject_matrix.vectors[123], forest, cfg)
    assert out[0].subject_code == subject_matrix.ids[123]
    assert out[0].score == pytest.approx(1.0, abs=1e-5)


def test_retrieve_candidates_near_exhaustive_at_defaults(large_ann_stack):
    # Default (512, 50000) candidate sets recover the exact-oracle top 512
    # almost perfectly on the 5,000-subject corpus.
    subject_matrix, doc_matrix, forest, _ = large_ann_stack
    cfg = PipelineConfig(n_candidates=512, search_k=50000, output_k=50)
    overlaps = []
    for row in range(100):
        got = {
            c.subject_code
            for c in retrieve_candidates(doc_matrix.vectors[row], forest, cfg)
        }
        oracle = {
            c.subject_code for c in exact_topk(subject_matrix, doc_matrix.vectors[row], 512)
        }
        overlaps.append(len(got & oracle) / 512)
    assert float(np.mean(overlaps)) >= 0.99


def test_run_pipeline_passthrough_runs_identical(small_stack):
    docs, subjects, doc_matrix, _, forest = small_stack
    cfg = PipelineConfig(
        n_candidates=64, search_k=5000, output_k=20,
        scorer=ScorerConfig(kind="passthrough"),
    )
    stage1, two_stage = run_pipeline(docs, subjects, doc_matrix, forest, cfg)
    assert stage1.entries.keys() == two_stage.entries.keys()
    for doc_id in stage1.entries:
        s1 = [code for code, _ in stage1.entries[doc_id]]
        s2 = [code for code, _ in two_stage.entries[doc_id]]
        assert s1 == s2


def test_run_pipeline_two_stage_subset_of_candidates(small_stack):
    docs, subjects, doc_matrix, _, forest = small_stack
    cfg = PipelineConfig(
        n_candidates=64, search_k=5000, output_k=20,
        scorer=ScorerConfig(kind="lexical"),
    )
    _, two_stage = run_pipeline(docs, subjects, doc_matrix, forest, cfg)
    for row, doc_id in enumerate(doc_matrix.ids[:40]):
        candidates = retrieve_candidates(doc_matrix.vectors[row], forest, cfg)
        candidate_codes = {c.subject_code for c in candidates}
        listed = [code for code, _ in two_stage.entries[doc_id]]
        assert set(listed) <= candidate_codes
        assert len(listed) == len(set(listed))
        assert len(listed) <= cfg.output_k


def test_run_pipeline_cardinality(small_stack):
    docs, subjects, doc_matrix, _, forest = small_stack
    cfg = PipelineConfig(n_candidates=512, search_k=50000, output_k=50)
    stage1, two_stage = run_pipeline(docs, subjects, doc_matrix, forest, cfg)
    assert len(stage1.entries) == 200
    assert len(two_stage.entries) == 200
    assert all(len(v) <= 50 for v in stage1.entries.values())
    assert all(len(v) <= 50 for v in two_stage.entries.values())


def test_run_pipeline_records_per_document_failures(small_stack, stub_service):
    docs, subjects, doc_matrix, _, forest = small_stack
    poisoned_title = docs[1].title

    def handler(body):
        if any(pair["left"].startswith(poisoned_title) for pair in body["pairs"]):
            return 500, {"error": "poisoned"}
        return 200, {"scores": [0.5] * len(body["pairs"])}

    stub_service.score_handler = handler
    cfg = PipelineConfig(
        n_candidates=16, search_k=2000, output_k=10,
        scorer=ScorerConfig(kind="remote", endpoint=stub_service.url, batch_size=64),
    )
    subset = docs[:3]
    matrix_subset = embed_corpus(
        EmbedderConfig(kind="hash", dim=64, seed=7),
        [(d.id, render_document_text(d)) for d in subset],
        "document",
    )
    stage1, two_stage = run_pipeline(subset, subjects, matrix_subset, forest, cfg)
    assert len(stage1.entries) == 3
    assert len(two_stage.entries) == 2
    assert len(two_stage.failures) == 1
    assert two_stage.failures[0][0] == docs[1].id
    assert "TransportError" in two_stage.failures[0][1]


def test_run_roundtrip(tmp_path, small_stack):
    docs, subjects, doc_matrix, _, forest = small_stack
    cfg = PipelineConfig(n_candidates=32, search_k=2000, output_k=10)
    stage1, _ = run_pipeline(docs[:20], subjects, _submatrix(doc_matrix, 20), forest, cfg)
    path = tmp_path / "run.jsonl"
    save_run(stage1, path)
    loaded = load_run(path)
    assert loaded.run_id == stage1.run_id
    assert loaded.stage == stage1.stage
    assert loaded.entries.keys() == stage1.entries.keys()
    for doc_id in stage1.entries:
        got = loaded.entries[doc_id]
        want = [(code, round(score, 6)) for code, score in stage1.entries[doc_id]]
        assert got == want


def _submatrix(matrix, n):
    from tagrank.embedding import EmbeddingMatrix

    return EmbeddingMatrix(matrix.ids[:n], matrix.vectors[:n])
