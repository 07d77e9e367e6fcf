"""Quantitative metrics, annotation workflow, and AB-style surfacing reports.

Quantitative metrics are micro-averaged over all (query, product) label
cells pooled together. The annotation workflow exports a CSV for expert
review; a row counts as correct only if every predicted product was judged
useful. Surfacing reports compare two models over the same query log.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

Predictor = Callable[[str], list[tuple[str, float]]]


class NoJudgedRows(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    rows: int  # number of queries
    cells: int  # rows * n_products
    precision: float
    recall: float
    accuracy: float
    f1: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AnnotationRow:
    query: str
    predicted: tuple[str, ...]
    verdict: str  # correct | incorrect | unjudged


@dataclass(frozen=True)
class SurfacingReport:
    total_queries: int
    surfaced: int
    null_rate: float
    mean_cards: float
    ctr: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def micro_metrics(
    predictions: Sequence[np.ndarray], gold: Sequence[set[int]], tau: float
) -> MetricsReport:
    """Micro metrics over the N x P binary cell matrix at threshold tau."""
    tp = fp = fn = tn = 0
    n_products = len(predictions[0]) if len(predictions) else 0
    for pred, gold_set in zip(predictions, gold):
        for k in range(len(pred)):
            predicted = pred[k] >= tau
            actual = k in gold_set
            if predicted and actual:
                tp += 1
            elif predicted:
                fp += 1
            elif actual:
                fn += 1
            else:
                tn += 1
    cells = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    accuracy = (tp + tn) / cells if cells else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(
        rows=len(predictions),
        cells=cells,
        precision=precision,
        recall=recall,
        accuracy=accuracy,
        f1=f1,
    )


def export_annotation_sheet(queries: Iterable[str], model: Predictor, path: str | Path) -> int:
    """Write a review CSV: query, predicted_products (semicolon-joined), verdict."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["query", "predicted_products", "verdict"])
        for query in queries:
            predicted = ";".join(pid for pid, _ in model(query))
            writer.writerow([query, predicted, "unjudged"])
            n += 1
    return n


def read_annotation_sheet(path: str | Path) -> list[AnnotationRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as f:
        for rec in csv.DictReader(f):
            predicted = tuple(p for p in rec["predicted_products"].split(";") if p)
            rows.append(AnnotationRow(rec["query"], predicted, rec["verdict"].strip().lower()))
    return rows


def qualitative_accuracy(rows: Iterable[AnnotationRow]) -> tuple[float, int, int, int]:
    """(accuracy over judged rows, n_correct, n_incorrect, n_unjudged)."""
    correct = incorrect = unjudged = 0
    for row in rows:
        if row.verdict == "correct":
            correct += 1
        elif row.verdict == "incorrect":
            incorrect += 1
        else:
            unjudged += 1
    if correct + incorrect == 0:
        raise NoJudgedRows("no judged annotation rows")
    return correct / (correct + incorrect), correct, incorrect, unjudged


def _surfacing(query_log: Sequence[str], model: Predictor) -> SurfacingReport:
    surfaced = 0
    cards = 0
    for query in query_log:
        predicted = model(query)
        cards += len(predicted)
        if predicted:
            surfaced += 1
    total = len(query_log)
    return SurfacingReport(
        total_queries=total,
        surfaced=surfaced,
        null_rate=1.0 - surfaced / total if total else 0.0,
        mean_cards=cards / total if total else 0.0,
    )


def surfacing_report(
    query_log: Sequence[str], model_a: Predictor, model_b: Predictor
) -> dict:
    """Run both models over the same query log; B-vs-A ratio statistics included."""
    report_a = _surfacing(query_log, model_a)
    report_b = _surfacing(query_log, model_b)
    surfacing_ratio = (
        report_b.surfaced / report_a.surfaced if report_a.surfaced else float("inf")
    )
    null_reduction = (
        (report_a.null_rate - report_b.null_rate) / report_a.null_rate
        if report_a.null_rate
        else 0.0
    )
    return {
        "model_a": report_a.to_dict(),
        "model_b": report_b.to_dict(),
        "surfacing_ratio_b_over_a": surfacing_ratio,
        "null_rate_reduction": null_reduction,
    }


def write_report(report: dict, path: str | Path | None) -> None:
    text = json.dumps(report, indent=2)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")
