import math

import pytest
from hypothesis import given, strategies as st

from appintent import pipeline
from appintent.pipeline import (
    ClickEvent,
    LabeledQuery,
    aggregate_clicks,
    build_behavioral,
    build_curated,
    build_ner_explicit,
    build_top_queries,
    merge_sources,
    relevance_weight,
    split_dataset,
)


class TestRelevanceWeight:
    def test_top_pair_maps_to_one(self):
        assert relevance_weight(0.0) == 1.0

    def test_known_ratio_value(self):
        # click ratio 0.174 -> weight 0.24
        assert relevance_weight(math.log(0.174)) == pytest.approx(0.24, abs=0.01)

    def test_floor_clamp(self):
        assert relevance_weight(math.log(1e-9)) == 0.05
        assert relevance_weight(math.log(1e-9), w_min=0.2) == 0.2

    @given(st.floats(min_value=-50.0, max_value=0.0))
    def test_bounded(self, raw):
        w = relevance_weight(raw)
        assert 0.05 <= w <= 1.0

    @given(st.floats(min_value=-50.0, max_value=0.0), st.floats(min_value=-50.0, max_value=0.0))
    def test_monotone(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert relevance_weight(lo) <= relevance_weight(hi)


class TestAggregateClicks:
    def test_hand_computed_ratios(self, catalog):
        events = [
            ClickEvent("crop photo", "d1", "ps", 8),
            ClickEvent("crop photo", "d2", "ps", 2),
        ]
        aggs = aggregate_clicks(events, catalog)
        by_doc = {a.document_id: a for a in aggs}
        assert by_doc["d1"].raw_log_ratio == pytest.approx(0.0, abs=1e-9)
        assert by_doc["d2"].raw_log_ratio == pytest.approx(math.log(2 / 8), abs=1e-9)
        assert by_doc["d1"].relevance == 1.0

    def test_repeated_events_sum(self, catalog):
        events = [
            ClickEvent("q", "d1", "ps", 3),
            ClickEvent("q", "d1", "ps", 4),
        ]
        aggs = aggregate_clicks(events, catalog)
        assert len(aggs) == 1
        assert aggs[0].clicks == 7

    def test_unknown_product_skipped(self, catalog):
        events = [
            ClickEvent("q", "d1", "ps", 5),
            ClickEvent("q", "d2", "ghost", 5),
        ]
        aggs = aggregate_clicks(events, catalog)
        assert [a.document_id for a in aggs] == ["d1"]

    def test_nonpositive_count_skipped(self, catalog):
        events = [ClickEvent("q", "d1", "ps", 0), ClickEvent("q", "d2", "ps", 1)]
        aggs = aggregate_clicks(events, catalog)
        assert [a.document_id for a in aggs] == ["d2"]

    def test_queries_normalized(self, catalog):
        events = [ClickEvent("Crop  Photo!", "d1", "ps", 1)]
        aggs = aggregate_clicks(events, catalog)
        assert aggs[0].query == "crop photo"

    def test_doc_order_lexicographic(self, catalog):
        events = [
            ClickEvent("q", "b", "ps", 1),
            ClickEvent("q", "a", "ps", 1),
        ]
        aggs = aggregate_clicks(events, catalog)
        assert [a.document_id for a in aggs] == ["a", "b"]


class TestSourceBuilders:
    def test_behavioral_takes_max_over_documents(self, catalog):
        events = [
            ClickEvent("q", "d1", "ps", 10),
            ClickEvent("q", "d2", "ps", 1),
        ]
        rows = build_behavioral(aggregate_clicks(events, catalog))
        assert len(rows) == 1
        assert rows[0].labels == {"ps": 1.0}
        assert rows[0].source == "behavioral"

    def test_curated_docs_weight_one(self):
        rows = build_curated([("Crop a photo", "How to crop.", "ps")])
        assert rows[0].labels == {"ps": 1.0}
        assert rows[0].source == "curated_docs"
        assert rows[0].query == "crop a photo"

    def test_ner_explicit_only_alias_queries(self, catalog):
        rows = build_ner_explicit(["photoshop crop", "edit video"], catalog)
        assert len(rows) == 1
        assert rows[0].labels == {"ps": 1.0}
        assert rows[0].source == "ner_explicit"

    def test_top_queries(self):
        rows = build_top_queries(["best editor"], "ps")
        assert rows[0].labels == {"ps": 1.0}
        assert rows[0].source == "product_top_queries"


class TestMergeSources:
    def test_max_weight_wins_on_collision(self):
        a = [LabeledQuery("q", {"ps": 0.3}, "behavioral")]
        b = [LabeledQuery("q", {"ps": 1.0}, "curated_docs")]
        merged = merge_sources(a, b)
        assert len(merged) == 1
        assert merged[0].labels == {"ps": 1.0}

    def test_labels_union_across_sources(self):
        a = [LabeledQuery("q", {"ps": 0.5}, "behavioral")]
        b = [LabeledQuery("q", {"pr": 1.0}, "ner_explicit")]
        merged = merge_sources(a, b)
        assert merged[0].labels == {"ps": 0.5, "pr": 1.0}

    def test_idempotent(self):
        rows = [
            LabeledQuery("a", {"ps": 0.4}, "behavioral"),
            LabeledQuery("b", {"pr": 1.0}, "curated_docs"),
        ]
        once = merge_sources(rows)
        twice = merge_sources(once)
        assert once == twice

    def test_deterministic_order(self):
        rows = [
            LabeledQuery("b", {"ps": 1.0}, "behavioral"),
            LabeledQuery("a", {"ps": 1.0}, "behavioral"),
        ]
        assert [r.query for r in merge_sources(rows)] == sorted(r.query for r in rows)


class TestSplitDataset:
    def _rows(self, n):
        return [LabeledQuery(f"q{i}", {"ps": 1.0}, "behavioral") for i in range(n)]

    def test_fractions_and_disjoint(self):
        split = split_dataset(self._rows(100), test_fraction=0.1, seed=0)
        assert len(split.test) == 10
        assert len(split.validation) == 10
        assert len(split.train) == 80
        queries = [r.query for r in split.train + split.validation + split.test]
        assert len(set(queries)) == 100

    def test_deterministic_per_seed(self):
        a = split_dataset(self._rows(50), test_fraction=0.2, seed=3)
        b = split_dataset(self._rows(50), test_fraction=0.2, seed=3)
        assert [r.query for r in a.test] == [r.query for r in b.test]

    def test_seed_changes_assignment(self):
        a = split_dataset(self._rows(50), test_fraction=0.2, seed=0)
        b = split_dataset(self._rows(50), test_fraction=0.2, seed=1)
        assert [r.query for r in a.test] != [r.query for r in b.test]


class TestJsonlIO:
    def test_click_log_roundtrip(self, tmp_path):
        events = [ClickEvent("q", "d", "ps", 2)]
        path = tmp_path / "clicks.jsonl"
        pipeline.write_click_log(events, path)
        assert pipeline.read_click_log(path) == events

    def test_labeled_roundtrip(self, tmp_path):
        rows = [LabeledQuery("q", {"ps": 0.24}, "behavioral")]
        path = tmp_path / "rows.jsonl"
        pipeline.write_labeled(rows, path)
        assert pipeline.read_labeled(path) == rows

    def test_curated_roundtrip(self, tmp_path):
        docs = [("T", "D", "ps")]
        path = tmp_path / "docs.jsonl"
        pipeline.write_curated_docs(docs, path)
        assert pipeline.read_curated_docs(path) == docs
