import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tagrank.corpus import Document
from tagrank.errors import InputError
from tagrank.evaluation import (
    DEFAULT_CUTOFFS,
    EvalReport,
    compare_runs,
    evaluate_run,
    recall_at_k,
)
from tagrank.pipeline import RankedRun


def test_recall_at_k_definition():
    assert recall_at_k(["A", "C", "D"], {"A", "B"}, 3) == 0.5


def test_recall_at_k_full_recovery():
    assert recall_at_k(["B", "A"], {"A", "B"}, 2) == 1.0


def test_recall_at_k_hand_count():
    assert recall_at_k(["C", "X", "A", "Y", "B"], {"A", "B", "C"}, 4) == pytest.approx(2 / 3)


def test_recall_at_k_rejects_empty_gold_and_bad_k():
    with pytest.raises(InputError):
        recall_at_k(["A"], set(), 3)
    with pytest.raises(InputError):
        recall_at_k(["A"], {"A"}, 0)


@settings(max_examples=100)
@given(
    ranked=st.lists(st.text("abcdef", min_size=1, max_size=2), max_size=30),
    gold=st.sets(st.text("abcdef", min_size=1, max_size=2), min_size=1, max_size=5),
    k=st.integers(1, 25),
)
def test_recall_monotone_in_k_and_in_range(ranked, gold, k):
    low = recall_at_k(ranked, gold, k)
    high = recall_at_k(ranked, gold, k + 3)
    assert 0.0 <= low <= high <= 1.0


@given(
    gold=st.sets(st.text("abcdef", min_size=1, max_size=2), min_size=1, max_size=5),
    k=st.integers(1, 10),
    data=st.data(),
)
def test_recall_insensitive_to_order_below_k(gold, k, data):
    ranked = data.draw(st.lists(st.text("abcdef", min_size=1, max_size=2), max_size=25))
    tail = data.draw(st.permutations(ranked[k:]))
    assert recall_at_k(ranked, gold, k) == recall_at_k(ranked[:k] + list(tail), gold, k)


def _run_with(entries):
    run = RankedRun(run_id="r", stage="stage1")
    run.entries = {
        doc_id: [(code, 1.0) for code in codes] for doc_id, codes in entries.items()
    }
    return run


def test_evaluate_run_mean_and_skip():
    docs = [
        Document(id="d1", title="t", gold_subjects=("A",)),
        Document(id="d2", title="t", gold_subjects=("B",)),
        Document(id="d3", title="t"),  # no gold: skipped
    ]
    run = _run_with({"d1": ["A", "x"], "d2": ["x", "y"], "d3": ["x"]})
    report = evaluate_run(run, docs, cutoffs=[5])
    assert report.avg_recall[5] == 0.5
    assert report.n_docs_evaluated == 2
    assert report.n_docs_skipped == 1


def test_evaluate_run_unknown_doc_errors():
    run = _run_with({"ghost": ["A"]})
    with pytest.raises(InputError, match="ghost"):
        evaluate_run(run, [Document(id="d1", title="t")], cutoffs=[5])


def test_evaluate_run_default_cutoff_grid():
    docs = [Document(id="d1", title="t", gold_subjects=("A",))]
    report = evaluate_run(_run_with({"d1": ["A"]}), docs)
    assert report.cutoffs == (5, 10, 15, 20, 25, 30, 35, 40, 45, 50)
    assert DEFAULT_CUTOFFS == report.cutoffs
    values = [report.avg_recall[k] for k in report.cutoffs]
    assert values == sorted(values)  # non-decreasing in k


def _report(run_id, values):
    cutoffs = tuple(sorted(values))
    return EvalReport(
        run_id=run_id,
        cutoffs=cutoffs,
        avg_recall=dict(values.items()),
        n_docs_evaluated=1,
        n_docs_skipped=0,
    )


def test_compare_identical_reports_zero_deltas():
    a = _report("a", {5: 0.3, 10: 0.4})
    comparison = compare_runs(a, _report("b", {5: 0.3, 10: 0.4}))
    for _, _, _, delta, relative in comparison.rows:
        assert delta == 0.0
        assert relative == 0.0


def test_compare_doubled_report_is_plus_100_percent():
    a = _report("a", {5: 0.2, 10: 0.3})
    b = _report("b", {5: 0.4, 10: 0.6})
    for _, _, _, _, relative in compare_runs(a, b).rows:
        assert relative == pytest.approx(1.0)


def test_compare_published_submission_values():
    # Two-run comparison fed with published recall@5 values 0.1161 -> 0.2126.
    a = _report("bi-encoder", {5: 0.1161})
    b = _report("two-stage", {5: 0.2126})
    ((k, va, vb, delta, relative),) = compare_runs(a, b).rows
    assert k == 5
    assert delta == pytest.approx(0.0965, abs=1e-10)
    assert relative == pytest.approx(0.831, abs=1e-3)
    rendered = compare_runs(a, b).render_text()
    assert "+83.1%" in rendered


def test_compare_rejects_cutoff_mismatch():
    with pytest.raises(InputError):
        compare_runs(_report("a", {5: 0.1}), _report("b", {10: 0.1}))


def test_report_json_and_text_rendering():
    report = _report("myrun", {5: 0.25, 10: 0.5})
    payload = json.loads(report.to_json())
    assert payload["run_id"] == "myrun"
    assert payload["avg_recall"] == {"5": 0.25, "10": 0.5}
    text = report.render_text()
    assert "myrun" in text
    assert "0.2500" in text


def test_comparison_json_shape():
    comparison = compare_runs(_report("a", {5: 0.1}), _report("b", {5: 0.3}))
    payload = json.loads(comparison.to_json())
    assert payload["rows"][0]["k"] == 5
    assert payload["rows"][0]["relative"] == pytest.approx(2.0)


def test_compare_zero_baseline_relative_is_null():
    comparison = compare_runs(_report("a", {5: 0.0}), _report("b", {5: 0.2}))
    ((_, _, _, _, relative),) = comparison.rows
    assert relative is None
    assert "n/a" in comparison.render_text()
