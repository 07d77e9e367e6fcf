"""Word-level vocabulary and fixed-length token blocks for pretraining.

Tokenization is catalog.normalize followed by whitespace split. Documents
are concatenated into one token stream and chunked into 128-token blocks;
the final partial block is PAD-filled.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .catalog import normalize

PAD_ID = 0
UNK_ID = 1
MASK_ID = 2
CLS_ID = 3
RESERVED = ("<pad>", "<unk>", "<mask>", "<cls>")

BLOCK_LEN = 128


class VocabError(ValueError):
    pass


@dataclass
class Vocab:
    tokens: list[str]  # id order, reserved first
    min_frequency: int
    token_to_id: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if tuple(self.tokens[:4]) != RESERVED:
            raise VocabError("reserved tokens must be <pad>, <unk>, <mask>, <cls> at ids 0..3")
        if len(self.tokens) < 5:
            raise VocabError("vocabulary must contain at least one non-reserved token")
        if not self.token_to_id:
            self.token_to_id = {t: i for i, t in enumerate(self.tokens)}

    @property
    def size(self) -> int:
        return len(self.tokens)


def tokenize(text: str) -> list[str]:
    norm = normalize(text)
    return norm.split(" ") if norm else []


def build_vocab(corpus: Iterable[str], min_frequency: int = 1) -> Vocab:
    """Deterministic vocab: tokens sorted by (descending frequency, lexicographic)."""
    counts: Counter[str] = Counter()
    for text in corpus:
        counts.update(tokenize(text))
    kept = sorted(
        (t for t, c in counts.items() if c >= min_frequency),
        key=lambda t: (-counts[t], t),
    )
    if not kept:
        raise VocabError("corpus produced no tokens at or above min_frequency")
    return Vocab(tokens=list(RESERVED) + kept, min_frequency=min_frequency)


def encode(text: str, vocab: Vocab) -> list[int]:
    return [vocab.token_to_id.get(t, UNK_ID) for t in tokenize(text)]


def decode(ids: Iterable[int], vocab: Vocab) -> str:
    return " ".join(vocab.tokens[i] for i in ids)


@dataclass(frozen=True)
class TokenBlock:
    ids: tuple[int, ...]
    attention_mask: tuple[int, ...]

    def __post_init__(self) -> None:
        assert len(self.ids) == len(self.attention_mask)


def make_blocks(docs: list[str], vocab: Vocab, block_len: int = BLOCK_LEN) -> list[TokenBlock]:
    """Concatenate documents into one token stream, chunk into fixed blocks."""
    stream: list[int] = []
    for doc in docs:
        stream.extend(encode(doc, vocab))
    blocks: list[TokenBlock] = []
    for i in range(0, len(stream), block_len):
        chunk = stream[i : i + block_len]
        n = len(chunk)
        ids = tuple(chunk) + (PAD_ID,) * (block_len - n)
        mask = (1,) * n + (0,) * (block_len - n)
        blocks.append(TokenBlock(ids=ids, attention_mask=mask))
    return blocks


def save_vocab(vocab: Vocab, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"min_frequency": vocab.min_frequency, "tokens": vocab.tokens}, f)
        f.write("\n")


def load_vocab(path: str | Path) -> Vocab:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    return Vocab(tokens=doc["tokens"], min_frequency=doc["min_frequency"])
