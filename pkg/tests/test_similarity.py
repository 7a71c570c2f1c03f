import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import resp
from slotstack.ingest import CorpusIndex
from slotstack.model import Query, group_candidates
from slotstack.similarity import (
    TfidfModel, TfidfVector, cosine, cross_provenance_similarity, query_doc_similarity, tfidf_vector,
)
from slotstack.slots import EntityType

IDX = CorpusIndex.from_texts({"D1": "a b", "D2": "b c", "D3": "a b", "D4": "zzz b"})


def test_weights_by_hand():
    small = CorpusIndex.from_texts({"D1": "a b", "D2": "b c"})
    v = tfidf_vector(small, "D1")
    assert v.weights["a"] == pytest.approx(math.log(2), abs=1e-12)
    assert v.weights["b"] == 0.0
    assert tfidf_vector(CorpusIndex.from_texts({"D": "x y"}), "D").norm == 0.0


def test_cosine_cases():
    a = TfidfVector({"x": 1.0}, 1.0)
    b = TfidfVector({"x": 1.0, "y": 1.0}, math.sqrt(2))
    assert cosine(a, b) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert cosine(a, a) == pytest.approx(1.0)
    assert cosine(a, TfidfVector({"z": 2.0}, 2.0)) == 0.0
    assert cosine(a, TfidfVector({}, 0.0)) == 0.0


def test_smooth_and_sublinear():
    m = TfidfModel(IDX, smooth=True, sublinear_tf=True)
    assert m.idf("b") == pytest.approx(math.log(5 / 5) + 1)
    assert m.vector("D1").norm > 0


def _query(doc):
    return Query("Q", "n", EntityType.PER, doc, (0, 1), ("per:title",))


def test_query_doc_similarity():
    m = TfidfModel(IDX)
    (c,) = group_candidates([resp("Q", "per:title", "a", "x", "D1"), resp("Q", "per:title", "b", "x", "D9")])
    sims = query_doc_similarity(c, _query("D1"), m, ["a", "b", "c"])
    assert sims["a"] == 1.0
    assert sims["b"] == 0.0 and m.missing["D9"] == 1
    assert sims["c"] == 0.0


def test_cross_provenance_similarity():
    m = TfidfModel(IDX)
    (one,) = group_candidates([resp("Q", "per:title", "a", "x", "D1")])
    assert cross_provenance_similarity(one, m, ["a"]) == {"a": 0.0}
    (two,) = group_candidates([resp("Q", "per:title", "a", "x", "D1"), resp("Q", "per:title", "b", "x", "D3")])
    assert cross_provenance_similarity(two, m, ["a", "b"]) == pytest.approx({"a": 1.0, "b": 1.0})


def test_cross_similarity_is_mean(monkeypatch):
    m = TfidfModel(IDX)
    table = {frozenset(("D1", "D2")): 0.4, frozenset(("D1", "D4")): 0.8, frozenset(("D2", "D4")): 0.1}
    monkeypatch.setattr(m, "doc_cosine", lambda a, b: table[frozenset((a, b))])
    (c,) = group_candidates([resp("Q", "per:title", s, "x", d) for s, d in (("a", "D1"), ("b", "D2"), ("c", "D4"))])
    assert cross_provenance_similarity(c, m, ["a"])["a"] == pytest.approx(0.6)


_doc = st.lists(st.sampled_from(["p", "q", "r", "s", "t"]), max_size=8).map(" ".join)


@given(st.dictionaries(st.sampled_from(["A", "B", "C", "D"]), _doc, min_size=2))
def test_cosine_bounds_and_symmetry(texts):
    m = TfidfModel(CorpusIndex.from_texts(texts))
    docs = sorted(texts)
    for x in docs:
        for y in docs:
            c = m.doc_cosine(x, y)
            assert 0.0 <= c <= 1.0
            assert c == pytest.approx(m.doc_cosine(y, x), abs=1e-12)
