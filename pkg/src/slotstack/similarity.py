"""TF-IDF document similarity features."""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

from .ingest import CorpusIndex
from .model import Candidate, Query

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TfidfVector:
    weights: dict[str, float]
    norm: float


class TfidfModel:
    """Caches TF-IDF vectors over a frozen corpus index.

    idf = ln(N / df) by default; ``smooth`` switches to ln((1 + N) / (1 + df)) + 1.
    tf is the raw count, or 1 + ln(count) with ``sublinear_tf``.
    """

    def __init__(self, index: CorpusIndex, *, smooth: bool = False, sublinear_tf: bool = False):
        self.index = index
        self.smooth = smooth
        self.sublinear_tf = sublinear_tf
        self.missing: Counter = Counter()
        self._cache: dict[str, TfidfVector] = {}

    def idf(self, term: str) -> float:
        n, df = self.index.n_docs, self.index.doc_freq[term]
        if self.smooth:
            return math.log((1 + n) / (1 + df)) + 1.0
        return math.log(n / df)

    def vector(self, doc_id: str) -> TfidfVector:
        vec = self._cache.get(doc_id)
        if vec is None:
            vec = tfidf_vector(self.index, doc_id, smooth=self.smooth, sublinear_tf=self.sublinear_tf)
            self._cache[doc_id] = vec
        return vec

    def doc_cosine(self, a: str, b: str) -> float:
        """Cosine between two documents; 0 (and a tally in ``missing``) if either is absent."""
        for d in (a, b):
            if d not in self.index:
                self.missing[d] += 1
                return 0.0
        if a == b:
            return 1.0 if self.vector(a).norm > 0 else 0.0
        return cosine(self.vector(a), self.vector(b))


def tfidf_vector(index: CorpusIndex, doc_id: str, *, smooth: bool = False,
                 sublinear_tf: bool = False) -> TfidfVector:
    if doc_id not in index:
        raise KeyError(f"document {doc_id!r} not in corpus index")
    n = index.n_docs
    weights = {}
    for term, count in sorted(index.term_freqs[doc_id].items()):
        df = index.doc_freq[term]
        idf = math.log((1 + n) / (1 + df)) + 1.0 if smooth else math.log(n / df)
        tf = 1.0 + math.log(count) if sublinear_tf else float(count)
        weights[term] = tf * idf
    return TfidfVector(weights, math.sqrt(sum(w * w for w in weights.values())))


def cosine(a: TfidfVector, b: TfidfVector) -> float:
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    if len(a.weights) > len(b.weights):
        a, b = b, a
    dot = sum(w * b.weights.get(t, 0.0) for t, w in a.weights.items())
    return min(1.0, dot / (a.norm * b.norm))


def query_doc_similarity(candidate: Candidate, query: Optional[Query], model: TfidfModel,
                         roster: Iterable[str]) -> dict[str, float]:
    """Per roster system: similarity of its provenance document to the query document."""
    out = {}
    for sid in roster:
        resp = candidate.responses.get(sid)
        if resp is None or query is None:
            out[sid] = 0.0
        else:
            out[sid] = model.doc_cosine(query.doc_id, resp.filler_provenance.doc_id)
    return out


def cross_provenance_similarity(candidate: Candidate, model: TfidfModel,
                                roster: Iterable[str]) -> dict[str, float]:
    """Per roster system: mean similarity of its provenance document to the other producers'."""
    docs = {sid: r.filler_provenance.doc_id for sid, r in candidate.responses.items()}
    out = {}
    for sid in roster:
        if sid not in docs or len(docs) == 1:
            out[sid] = 0.0
            continue
        sims = [model.doc_cosine(docs[sid], docs[o]) for o in sorted(docs) if o != sid]
        out[sid] = sum(sims) / len(sims)
    return out
