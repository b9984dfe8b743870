"""Lexical and vector retrieval primitives for hybrid search.

BM25 over an in-memory inverted index plus cosine similarity over
embedding vectors; the two scores get fused in user SQL. No stemming and
no stop words — behavior stays transparent and easy to verify by hand.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import DimensionMismatch, DuplicateDocId, ZeroVector

_TOKEN = re.compile(r"[a-z0-9]+")

BM25_K1 = 1.2
BM25_B = 0.75


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop empties."""
    return _TOKEN.findall(text.lower())


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[object, int]]] = field(default_factory=dict)
    doc_lengths: dict[object, int] = field(default_factory=dict)
    k1: float = BM25_K1
    b: float = BM25_B

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    @property
    def average_doc_length(self) -> float:
        if not self.doc_lengths:
            return 0.0
        return sum(self.doc_lengths.values()) / len(self.doc_lengths)


def build_fts_index(
    ids: list, texts: list, k1: float = BM25_K1, b: float = BM25_B
) -> InvertedIndex:
    index = InvertedIndex(k1=k1, b=b)
    for doc_id, text in zip(ids, texts):
        if doc_id in index.doc_lengths:
            raise DuplicateDocId(f"duplicate document id {doc_id!r}")
        tokens = tokenize("" if text is None else str(text))
        index.doc_lengths[doc_id] = len(tokens)
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        for term, tf in counts.items():
            index.postings.setdefault(term, []).append((doc_id, tf))
    return index


def bm25_match(index: InvertedIndex, query: str) -> dict:
    """Score every document containing at least one query term.

    Uses the non-negative idf variant ln(1 + (N - df + 0.5)/(df + 0.5)),
    which stays >= 0 even on tiny corpora.
    """
    n = index.doc_count
    avgdl = index.average_doc_length
    scores: dict[object, float] = {}
    for term in tokenize(query):
        plist = index.postings.get(term)
        if not plist:
            continue
        df = len(plist)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        for doc_id, tf in plist:
            dl = index.doc_lengths[doc_id]
            norm = index.k1 * (1.0 - index.b + index.b * dl / avgdl) if avgdl else index.k1
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (index.k1 + 1.0) / (tf + norm)
    return scores


def cosine_similarity(a: list[float], b: list[float]) -> float:
    if len(a) != len(b):
        raise DimensionMismatch(f"dimensions differ: {len(a)} vs {len(b)}")
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(x * x for x in b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity undefined for an all-zero vector")
    return sum(x * y for x, y in zip(a, b)) / (norm_a * norm_b)
