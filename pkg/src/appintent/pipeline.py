"""Click-log ingestion, relevance weighting, source merging, and splits.

The behavioral signal is per-(query, document) click counts. For each
query we take the log of the click ratio against the most-clicked
document, then map it into a training weight in [w_min, 1] so that
less-clicked documents still contribute. Curated, NER-explicit, and
top-query sources carry weight 1. The merged dataset is split by query
to avoid leakage.
"""
from __future__ import annotations

import json
import logging
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .catalog import Catalog, extract_products, normalize

logger = logging.getLogger(__name__)

DEFAULT_W_MIN = 0.05

# provenance priority for merged rows, highest first
SOURCE_PRIORITY = ("curated_docs", "ner_explicit", "product_top_queries", "behavioral")


@dataclass(frozen=True)
class ClickEvent:
    query: str
    document_id: str
    product_id: str
    count: int


@dataclass(frozen=True)
class QueryDocAggregate:
    query: str  # normalized
    document_id: str
    product_id: str
    clicks: int
    raw_log_ratio: float  # ln(clicks / max clicks for this query), <= 0
    relevance: float


@dataclass
class LabeledQuery:
    query: str  # normalized
    labels: dict[str, float]  # product_id -> weight in (0, 1]
    source: str


@dataclass
class DatasetSplit:
    train: list[LabeledQuery]
    validation: list[LabeledQuery]
    test: list[LabeledQuery]
    seed: int


def relevance_weight(raw_log_ratio: float, w_min: float = DEFAULT_W_MIN) -> float:
    """Map a non-positive log click ratio to a training weight in [w_min, 1]."""
    if raw_log_ratio > 0:
        raise ValueError(f"raw_log_ratio must be <= 0, got {raw_log_ratio}")
    if not 0 < w_min < 1:
        raise ValueError(f"w_min must be in (0, 1), got {w_min}")
    weight = 1.0 + raw_log_ratio / math.log(10)
    return min(1.0, max(w_min, weight))


def aggregate_clicks(
    events: Iterable[ClickEvent], catalog: Catalog, w_min: float = DEFAULT_W_MIN
) -> list[QueryDocAggregate]:
    """Sum clicks per (query, document), then compute per-query log click ratios."""
    totals: dict[str, dict[str, tuple[str, int]]] = defaultdict(dict)
    for ev in events:
        if ev.count < 1:
            logger.warning("rejecting click row with count %d for query %r", ev.count, ev.query)
            continue
        if ev.product_id not in catalog:
            logger.warning(
                "rejecting click row with unknown product %r for query %r",
                ev.product_id,
                ev.query,
            )
            continue
        q = normalize(ev.query)
        if not q:
            logger.warning("rejecting click row with empty query")
            continue
        prev = totals[q].get(ev.document_id)
        if prev is None:
            totals[q][ev.document_id] = (ev.product_id, ev.count)
        else:
            totals[q][ev.document_id] = (prev[0], prev[1] + ev.count)

    out: list[QueryDocAggregate] = []
    for q in sorted(totals):
        docs = totals[q]
        max_clicks = max(c for _, c in docs.values())
        for doc_id in sorted(docs):  # lexicographic tie-break, order-insensitive output
            pid, clicks = docs[doc_id]
            ratio = math.log(clicks / max_clicks)
            out.append(
                QueryDocAggregate(
                    query=q,
                    document_id=doc_id,
                    product_id=pid,
                    clicks=clicks,
                    raw_log_ratio=ratio,
                    relevance=relevance_weight(ratio, w_min),
                )
            )
    return out


def build_behavioral(aggregates: Iterable[QueryDocAggregate]) -> list[LabeledQuery]:
    """Per (query, product): max relevance over that product's clicked documents."""
    by_query: dict[str, dict[str, float]] = defaultdict(dict)
    for agg in aggregates:
        cur = by_query[agg.query].get(agg.product_id, 0.0)
        by_query[agg.query][agg.product_id] = max(cur, agg.relevance)
    return [
        LabeledQuery(query=q, labels=dict(by_query[q]), source="behavioral")
        for q in sorted(by_query)
    ]


def build_curated(docs: Iterable[tuple[str, str, str]]) -> list[LabeledQuery]:
    """Each document title and description becomes a weight-1 example."""
    out: list[LabeledQuery] = []
    for title, description, product_id in docs:
        for text in (title, description):
            q = normalize(text)
            if q:
                out.append(LabeledQuery(query=q, labels={product_id: 1.0}, source="curated_docs"))
    return out


def build_ner_explicit(queries: Iterable[str], catalog: Catalog) -> list[LabeledQuery]:
    """Queries with at least one gazetteer hit, labeled weight 1 per matched product."""
    out: list[LabeledQuery] = []
    for query in queries:
        matches = extract_products(query, catalog)
        if not matches:
            continue
        labels = {m.product_id: 1.0 for m in matches}
        out.append(LabeledQuery(query=normalize(query), labels=labels, source="ner_explicit"))
    return out


def build_top_queries(queries: Iterable[str], product_id: str) -> list[LabeledQuery]:
    return [
        LabeledQuery(query=normalize(q), labels={product_id: 1.0}, source="product_top_queries")
        for q in queries
        if normalize(q)
    ]


def merge_sources(*sources: Iterable[LabeledQuery]) -> list[LabeledQuery]:
    """Group by query; union labels, max weight on collision, best source kept."""
    labels: dict[str, dict[str, float]] = defaultdict(dict)
    provenance: dict[str, int] = {}
    order: list[str] = []
    for source in sources:
        for lq in source:
            if lq.query not in labels:
                order.append(lq.query)
            for pid, w in lq.labels.items():
                cur = labels[lq.query].get(pid, 0.0)
                labels[lq.query][pid] = max(cur, w)
            rank = SOURCE_PRIORITY.index(lq.source)
            provenance[lq.query] = min(provenance.get(lq.query, len(SOURCE_PRIORITY)), rank)
    return [
        LabeledQuery(query=q, labels=dict(labels[q]), source=SOURCE_PRIORITY[provenance[q]])
        for q in sorted(order)
    ]


def split_dataset(
    data: list[LabeledQuery],
    test_fraction: float = 0.10,
    seed: int = 0,
    validation_fraction: float = 0.10,
) -> DatasetSplit:
    """Deterministic query-level split; no query appears in two splits."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rows = sorted(data, key=lambda lq: lq.query)
    rng = random.Random(seed)
    rng.shuffle(rows)
    n = len(rows)
    n_test = round(n * test_fraction)
    n_val = round(n * validation_fraction)
    return DatasetSplit(
        test=rows[:n_test],
        validation=rows[n_test : n_test + n_val],
        train=rows[n_test + n_val :],
        seed=seed,
    )


# ---------------------------------------------------------------------------
# file formats (JSON Lines, UTF-8)

def read_click_log(path: str | Path) -> list[ClickEvent]:
    events = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            events.append(
                ClickEvent(
                    query=row["query"],
                    document_id=row["document_id"],
                    product_id=row["product_id"],
                    count=int(row["count"]),
                )
            )
    return events


def write_click_log(events: Iterable[ClickEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ev in events:
            f.write(
                json.dumps(
                    {
                        "query": ev.query,
                        "document_id": ev.document_id,
                        "product_id": ev.product_id,
                        "count": ev.count,
                    }
                )
                + "\n"
            )


def read_curated_docs(path: str | Path) -> list[tuple[str, str, str]]:
    docs = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            docs.append((row["title"], row["description"], row["product_id"]))
    return docs


def write_curated_docs(docs: Iterable[tuple[str, str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for title, description, product_id in docs:
            f.write(
                json.dumps(
                    {"title": title, "description": description, "product_id": product_id}
                )
                + "\n"
            )


def read_labeled(path: str | Path) -> list[LabeledQuery]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            rows.append(LabeledQuery(query=row["query"], labels=row["labels"], source=row["source"]))
    return rows


def write_labeled(rows: Iterable[LabeledQuery], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for lq in rows:
            f.write(json.dumps({"query": lq.query, "labels": lq.labels, "source": lq.source}) + "\n")
