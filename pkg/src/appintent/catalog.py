"""Product catalog and rule-based explicit product NER.

The catalog is the label space for the classifier; the gazetteer matcher
is both a training-data source (explicit product mentions) and the
pre-semantic baseline. Matching is deterministic: longest alias wins at
token boundaries over normalized text, ties broken by catalog order.
No fuzzy matching -- implicit queries intentionally return no matches.
"""
from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path


class CatalogError(ValueError):
    """Invalid catalog content."""


class DuplicateProductId(CatalogError):
    pass


class EmptyAlias(CatalogError):
    pass


_PUNCT_RE = re.compile(r"[^\w\s]|_")
_WS_RE = re.compile(r"\s+")


def normalize(text: str) -> str:
    """Lowercase, NFC-normalize, replace punctuation with spaces, collapse whitespace."""
    t = unicodedata.normalize("NFC", text).lower()
    t = _PUNCT_RE.sub(" ", t)
    return _WS_RE.sub(" ", t).strip()


@dataclass(frozen=True)
class Product:
    id: str
    display_name: str
    aliases: tuple[str, ...]


@dataclass(frozen=True)
class NerMatch:
    product_id: str
    start: int
    end: int
    matched_alias: str

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass
class Catalog:
    products: list[Product]
    label_index: dict[str, int] = field(default_factory=dict)
    # normalized alias -> (token_count, product_id, catalog_position)
    _alias_map: dict[str, tuple[int, str, int]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.products = list(self.products)
        if len({p.id for p in self.products}) != len(self.products):
            raise DuplicateProductId("catalog contains duplicate product ids")
        if not self.label_index:
            self.label_index = {p.id: i for i, p in enumerate(self.products)}
        if not self._alias_map:
            for pos, p in enumerate(self.products):
                for alias in p.aliases:
                    norm = normalize(alias)
                    if not norm:
                        raise EmptyAlias(f"product {p.id!r} has an alias that normalizes to empty")
                    # first product in catalog order owns a shared alias
                    if norm not in self._alias_map:
                        self._alias_map[norm] = (len(norm.split()), p.id, pos)

    @property
    def size(self) -> int:
        return len(self.products)

    def product_by_id(self, product_id: str) -> Product:
        return self.products[self.label_index[product_id]]

    def __contains__(self, product_id: str) -> bool:
        return product_id in self.label_index


def load_catalog(path: str | Path) -> Catalog:
    """Load a catalog JSON file; label positions follow file order."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    return catalog_from_dict(doc)


def catalog_from_dict(doc: dict) -> Catalog:
    products: list[Product] = []
    try:
        entries = doc["products"]
    except (KeyError, TypeError) as exc:
        raise CatalogError("catalog document must have a 'products' list") from exc
    for entry in entries:
        try:
            pid = entry["id"]
            display_name = entry["display_name"]
            aliases = tuple(entry["aliases"])
        except (KeyError, TypeError) as exc:
            raise CatalogError(f"malformed product entry: {entry!r}") from exc
        if not pid:
            raise CatalogError("empty product id")
        for a in aliases:
            if not normalize(a):
                raise EmptyAlias(f"product {pid!r} has empty alias {a!r}")
        products.append(Product(id=pid, display_name=display_name, aliases=aliases))
    return Catalog(products=products)


def catalog_to_dict(catalog: Catalog) -> dict:
    return {
        "products": [
            {"id": p.id, "display_name": p.display_name, "aliases": list(p.aliases)}
            for p in catalog.products
        ]
    }


def save_catalog(catalog: Catalog, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(catalog_to_dict(catalog), f, indent=2)
        f.write("\n")


def extract_products(query: str, catalog: Catalog) -> list[NerMatch]:
    """Gazetteer match over the normalized query.

    Left-to-right greedy scan at token boundaries; at each token position
    the longest matching alias wins and the scan resumes after it.
    """
    norm = normalize(query)
    if not norm:
        return []
    tokens = norm.split(" ")
    # character offset of each token in the normalized string
    offsets: list[int] = []
    pos = 0
    for tok in tokens:
        offsets.append(pos)
        pos += len(tok) + 1
    max_alias_tokens = max((n for n, _, _ in catalog._alias_map.values()), default=0)

    matches: list[NerMatch] = []
    i = 0
    n = len(tokens)
    while i < n:
        best: tuple[int, int, str, str] | None = None  # (token_count, catalog_pos, pid, alias)
        upper = min(n - i, max_alias_tokens)
        for k in range(upper, 0, -1):
            candidate = " ".join(tokens[i : i + k])
            hit = catalog._alias_map.get(candidate)
            if hit is not None:
                _, pid, cat_pos = hit
                best = (k, cat_pos, pid, candidate)
                break  # longest k first
        if best is None:
            i += 1
            continue
        k, _, pid, alias = best
        start = offsets[i]
        end = offsets[i + k - 1] + len(tokens[i + k - 1])
        matches.append(NerMatch(product_id=pid, start=start, end=end, matched_alias=alias))
        i += k
    return matches
