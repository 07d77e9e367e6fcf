"""Synthetic catalog, corpus, click logs, and query sets with planted truth.

Each product owns a set of exclusive keywords. Documents mix a product's
keywords with its aliases, so pretraining can learn the association;
behavioral queries are explicit (contain an alias) or implicit (exclusive
keywords only, no alias anywhere), and clicks are planted so the true
product's documents receive the majority share. Everything is
deterministic for a fixed seed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catalog import Catalog, Product, save_catalog
from .pipeline import ClickEvent, write_click_log, write_curated_docs

_SYLLABLES = [
    "ba", "re", "mi", "to", "ka", "lu", "ne", "so", "vi", "da",
    "po", "zu", "fe", "gi", "ro", "sha", "tem", "ol", "ix", "an",
]

# safe fillers never collide with aliases; "studio" is planted as an
# ambiguous alias of the first product to mirror common-word product names
_SAFE_FILLERS = [
    "how", "to", "make", "edit", "create", "new", "free", "best",
    "online", "quick", "my", "with", "from", "file", "guide", "help",
]
_AMBIGUOUS_FILLER = "studio"


@dataclass(frozen=True)
class SynthSpec:
    n_products: int = 10
    keywords_per_product: int = 6
    n_documents: int = 600
    doc_tokens: int = 30
    n_behavioral_queries: int = 800
    n_top_queries: int = 20
    implicit_fraction: float = 0.5
    multi_product_fraction: float = 0.1
    epsilon: float = 0.1  # probability a click lands on a wrong-product document
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError("epsilon must be in [0, 0.5)")
        if self.keywords_per_product < 2:
            raise ValueError("every product needs at least 2 exclusive keywords")


@dataclass
class SynthData:
    catalog: Catalog
    docs: list[tuple[str, str, str]]  # (title, description, product_id)
    click_log: list[ClickEvent]
    query_sets: dict[str, list[str]]  # explicit / implicit / multi / top
    ground_truth: dict[str, set[str]]
    top_product_id: str
    keywords: dict[str, list[str]] = field(default_factory=dict)


def _make_words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    words: list[str] = []
    while len(words) < n:
        k = int(rng.integers(2, 4))
        w = "".join(_SYLLABLES[int(i)] for i in rng.integers(0, len(_SYLLABLES), size=k))
        if w not in taken and w not in _SAFE_FILLERS and w != _AMBIGUOUS_FILLER:
            taken.add(w)
            words.append(w)
    return words


def generate(spec: SynthSpec) -> SynthData:
    rng = np.random.default_rng(spec.seed)
    taken: set[str] = set()

    names = _make_words(rng, spec.n_products, taken)
    products = []
    keywords: dict[str, list[str]] = {}
    for i, name in enumerate(names):
        pid = name
        aliases = [name, f"{name} pro"]
        if i == 0:
            aliases.append(_AMBIGUOUS_FILLER)
        products.append(Product(id=pid, display_name=name.capitalize(), aliases=tuple(aliases)))
        keywords[pid] = _make_words(rng, spec.keywords_per_product, taken)
    catalog = Catalog(products=products)
    pids = [p.id for p in products]

    # documents: titles and keyword-heavy descriptions per product
    docs: list[tuple[str, str, str]] = []
    doc_ids: dict[str, list[str]] = {pid: [] for pid in pids}
    fillers = _SAFE_FILLERS + [_AMBIGUOUS_FILLER]
    for j in range(spec.n_documents):
        pid = pids[j % len(pids)]
        kws = keywords[pid]
        k1, k2 = rng.choice(len(kws), size=2, replace=False)
        title = f"{kws[int(k1)]} {kws[int(k2)]} in {pid}"
        body = []
        for _ in range(spec.doc_tokens):
            r = rng.random()
            if r < 0.65:
                body.append(kws[int(rng.integers(0, len(kws)))])
            elif r < 0.85:
                body.append(fillers[int(rng.integers(0, len(fillers)))])
            else:
                body.append(pid)
        docs.append((title, " ".join(body), pid))
        doc_ids[pid].append(f"doc_{pid}_{len(doc_ids[pid])}")

    def implicit_query(pid_list: list[str]) -> str:
        parts: list[str] = []
        for pid in pid_list:
            kws = keywords[pid]
            # two-product queries carry two keywords per product so each
            # intent is individually recoverable; single-product queries vary
            n_kw = 2 if len(pid_list) > 1 else int(rng.integers(1, 3))
            idx = rng.choice(len(kws), size=n_kw, replace=False)
            parts.extend(kws[int(i)] for i in idx)
        if rng.random() < 0.5:
            parts.insert(0, _SAFE_FILLERS[int(rng.integers(0, len(_SAFE_FILLERS)))])
        return " ".join(parts)

    def explicit_query(pid: str) -> str:
        kws = keywords[pid]
        kw = kws[int(rng.integers(0, len(kws)))]
        alias = catalog.product_by_id(pid).aliases[0]
        if rng.random() < 0.5:
            return f"{alias} {kw}"
        return f"{kw} in {alias}"

    # behavioral queries with planted truth
    ground_truth: dict[str, set[str]] = {}
    query_sets: dict[str, list[str]] = {"explicit": [], "implicit": [], "multi": [], "top": []}
    click_log: list[ClickEvent] = []
    attempts = 0
    while (
        len(query_sets["explicit"]) + len(query_sets["implicit"]) + len(query_sets["multi"])
        < spec.n_behavioral_queries
        and attempts < spec.n_behavioral_queries * 50
    ):
        attempts += 1
        r = rng.random()
        if r < spec.multi_product_fraction:
            a, b = rng.choice(len(pids), size=2, replace=False)
            true = [pids[int(a)], pids[int(b)]]
            query = implicit_query(true)
            kind = "multi"
        elif r < spec.multi_product_fraction + (1 - spec.multi_product_fraction) * spec.implicit_fraction:
            true = [pids[int(rng.integers(0, len(pids)))]]
            query = implicit_query(true)
            kind = "implicit"
        else:
            true = [pids[int(rng.integers(0, len(pids)))]]
            query = explicit_query(true[0])
            kind = "explicit"
        if query in ground_truth:
            continue
        ground_truth[query] = set(true)
        query_sets[kind].append(query)

        total = int(rng.integers(10, 60))
        n_wrong = int(rng.binomial(total, spec.epsilon))
        n_true = total - n_wrong
        # majority share to one document of the first true product
        shares: list[tuple[str, str, int]] = []  # (doc, pid, clicks)
        per_product = max(1, n_true // len(true))
        remaining = n_true
        for t, pid in enumerate(true):
            c = remaining if t == len(true) - 1 else per_product
            remaining -= c
            if c <= 0:
                continue
            docs_for = doc_ids[pid]
            d_main = docs_for[int(rng.integers(0, len(docs_for)))]
            c_main = max(1, math.ceil(c * 0.7))
            shares.append((d_main, pid, c_main))
            if c - c_main > 0:
                d_alt = docs_for[int(rng.integers(0, len(docs_for)))]
                if d_alt == d_main:
                    shares[-1] = (d_main, pid, c)
                else:
                    shares.append((d_alt, pid, c - c_main))
        wrong_pids = [p for p in pids if p not in true]
        for _ in range(n_wrong):
            wp = wrong_pids[int(rng.integers(0, len(wrong_pids)))]
            wd = doc_ids[wp][int(rng.integers(0, len(doc_ids[wp])))]
            shares.append((wd, wp, 1))
        for doc_id, pid, count in shares:
            click_log.append(
                ClickEvent(query=query, document_id=doc_id, product_id=pid, count=count)
            )

    # top in-product queries for the "newest" product (sparse in click logs)
    top_pid = pids[-1]
    while len(query_sets["top"]) < spec.n_top_queries:
        q = implicit_query([top_pid])
        if q in ground_truth:
            continue
        ground_truth[q] = {top_pid}
        query_sets["top"].append(q)

    return SynthData(
        catalog=catalog,
        docs=docs,
        click_log=click_log,
        query_sets=query_sets,
        ground_truth=ground_truth,
        top_product_id=top_pid,
        keywords=keywords,
    )


def write_files(data: SynthData, outdir: str | Path) -> dict[str, str]:
    """Emit exactly the file formats the ingestion pipeline consumes."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    save_catalog(data.catalog, out / "catalog.json")
    write_click_log(data.click_log, out / "clicks.jsonl")
    write_curated_docs(data.docs, out / "docs.jsonl")
    behavioral = data.query_sets["explicit"] + data.query_sets["implicit"] + data.query_sets["multi"]
    (out / "queries.txt").write_text("\n".join(behavioral) + "\n", encoding="utf-8")
    (out / "top_queries.txt").write_text("\n".join(data.query_sets["top"]) + "\n", encoding="utf-8")
    (out / "query_sets.json").write_text(
        json.dumps(data.query_sets, indent=2) + "\n", encoding="utf-8"
    )
    (out / "ground_truth.json").write_text(
        json.dumps(
            {q: sorted(p) for q, p in sorted(data.ground_truth.items())},
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    (out / "top_product.txt").write_text(data.top_product_id + "\n", encoding="utf-8")
    return {
        "catalog": str(out / "catalog.json"),
        "clicks": str(out / "clicks.jsonl"),
        "docs": str(out / "docs.jsonl"),
        "queries": str(out / "queries.txt"),
        "top_queries": str(out / "top_queries.txt"),
        "query_sets": str(out / "query_sets.json"),
        "ground_truth": str(out / "ground_truth.json"),
    }
