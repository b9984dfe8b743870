"""BM25 against a naive reference scorer, and cosine similarity laws."""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flock.errors import DimensionMismatch, DuplicateDocId, ZeroVector
from flock.retrieval import build_fts_index, bm25_match, cosine_similarity, tokenize

K1 = 1.2
B = 0.75

_WORDS = [
    "join", "hash", "sort", "merge", "index", "query", "plan", "scan",
    "cache", "tree", "graph", "cost", "tuple", "page", "lock", "log",
]


def naive_bm25(docs: dict, query: str) -> dict:
    """Straight-from-the-formula scorer, no inverted index."""
    tokenized = {doc_id: tokenize(text) for doc_id, text in docs.items()}
    n = len(docs)
    avgdl = sum(len(t) for t in tokenized.values()) / n if n else 0.0
    scores = {}
    for doc_id, terms in tokenized.items():
        score = 0.0
        matched = False
        for term in tokenize(query):  # repeated query terms count again
            tf = terms.count(term)
            if tf == 0:
                continue
            matched = True
            df = sum(1 for t in tokenized.values() if term in t)
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            dl = len(terms)
            score += idf * tf * (K1 + 1) / (tf + K1 * (1 - B + B * dl / avgdl))
        if matched:
            scores[doc_id] = score
    return scores


def random_corpus(rng: random.Random, size: int) -> dict:
    return {
        i: " ".join(rng.choices(_WORDS, k=rng.randint(1, 30)))
        for i in range(size)
    }


def test_bm25_matches_naive_scorer_on_random_corpora():
    rng = random.Random(7)
    for trial in range(10):
        docs = random_corpus(rng, 50)
        index = build_fts_index(list(docs.keys()), list(docs.values()))
        for _ in range(10):
            query = " ".join(rng.choices(_WORDS, k=rng.randint(1, 4)))
            got = bm25_match(index, query)
            want = naive_bm25(docs, query)
            assert set(got) == set(want)
            for doc_id in want:
                assert got[doc_id] == pytest.approx(want[doc_id], abs=1e-9)


def test_bm25_scores_only_matching_docs():
    index = build_fts_index([1, 2, 3], ["hash join", "sort merge", "b tree index"])
    scores = bm25_match(index, "join")
    assert set(scores) == {1}
    assert scores[1] > 0


def test_bm25_empty_query_scores_nothing():
    index = build_fts_index([1], ["hash join"])
    assert bm25_match(index, "") == {}
    assert bm25_match(index, "zebra") == {}


def test_tokenize_lowercases_and_splits_on_non_alnum():
    assert tokenize("Hash-JOIN (v2), fast!") == ["hash", "join", "v2", "fast"]
    assert tokenize("") == []


def test_duplicate_doc_ids_rejected():
    with pytest.raises(DuplicateDocId):
        build_fts_index([1, 1], ["a", "b"])


def test_index_statistics():
    index = build_fts_index([1, 2], ["a b c", "a"])
    assert index.doc_count == 2
    assert index.average_doc_length == pytest.approx(2.0)


# --- cosine similarity ---------------------------------------------------------

finite = st.floats(min_value=-100, max_value=100, allow_nan=False)
vectors = st.integers(min_value=1, max_value=8).flatmap(
    lambda n: st.tuples(
        st.lists(finite, min_size=n, max_size=n),
        st.lists(finite, min_size=n, max_size=n),
    )
)


def _nonzero(v):
    return any(abs(x) > 1e-6 for x in v)


@settings(max_examples=200)
@given(vectors)
def test_cosine_symmetry(pair):
    a, b = pair
    if not (_nonzero(a) and _nonzero(b)):
        return
    assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(b, a), abs=1e-12)


@settings(max_examples=200)
@given(vectors, st.floats(min_value=0.1, max_value=50))
def test_cosine_scale_invariance(pair, scale):
    a, b = pair
    if not (_nonzero(a) and _nonzero(b)):
        return
    scaled = [x * scale for x in a]
    assert cosine_similarity(scaled, b) == pytest.approx(
        cosine_similarity(a, b), abs=1e-12
    )


def test_cosine_known_values():
    assert cosine_similarity([1, 0], [0, 1]) == pytest.approx(0.0, abs=1e-12)
    assert cosine_similarity([1, 2], [2, 4]) == pytest.approx(1.0, abs=1e-12)
    assert cosine_similarity([1, 0], [-1, 0]) == pytest.approx(-1.0, abs=1e-12)


def test_cosine_errors():
    with pytest.raises(DimensionMismatch):
        cosine_similarity([1, 2], [1, 2, 3])
    with pytest.raises(ZeroVector):
        cosine_similarity([0, 0], [1, 2])
