"""Provenance agreement features.

Two scores per system response for a (query, slot):

* document provenance score -- n/N, where N systems answered the slot and n of
  them cite the same document as this response;
* offset provenance score -- summed Jaccard overlap of this response's spans
  with every other system citing the same document, divided by the size of
  that same-document group (the self term is excluded from the sum but
  counted in the denominator, so the score is always < 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from statistics import fmean
from typing import Iterable, Sequence

from .model import Candidate, Provenance, ResponseLine

FILLER = "filler"
RELATION = "relation"


def span_jaccard(a: Sequence[tuple[int, int]], b: Sequence[tuple[int, int]]) -> float:
    """Jaccard index between the character positions covered by two span lists.

    Spans are inclusive.  Computed from merged intervals so long spans cost
    nothing extra.
    """
    ma, mb = _merge(a), _merge(b)
    inter = 0
    i = j = 0
    while i < len(ma) and j < len(mb):
        lo = max(ma[i][0], mb[j][0])
        hi = min(ma[i][1], mb[j][1])
        if lo <= hi:
            inter += hi - lo + 1
        if ma[i][1] < mb[j][1]:
            i += 1
        else:
            j += 1
    union = _covered(ma) + _covered(mb) - inter
    return inter / union if union else 0.0


def _merge(spans):
    out = []
    for s, e in sorted(spans):
        if out and s <= out[-1][1] + 1:
            out[-1][1] = max(out[-1][1], e)
        else:
            out.append([s, e])
    return out


def _covered(merged) -> int:
    return sum(e - s + 1 for s, e in merged)


@dataclass(frozen=True)
class ProvenanceGroup:
    """All provenance cited for one (query, slot), bucketed by document.

    ``groups[doc]`` maps each system citing ``doc`` to the spans it cites
    there (a system answering a list slot several times from one document
    contributes the union of its spans).
    """

    query_id: str
    slot: str
    n_total: int
    groups: dict[str, dict[str, tuple[tuple[int, int], ...]]]

    @classmethod
    def from_responses(cls, responses: Iterable[ResponseLine], column: str = FILLER) -> "ProvenanceGroup":
        groups: dict[str, dict[str, list]] = {}
        systems = set()
        qs = None
        for r in responses:
            if r.is_nil:
                continue
            if qs is None:
                qs = (r.query_id, r.slot)
            elif qs != (r.query_id, r.slot):
                raise ValueError(f"mixed keys in provenance pool: {qs} vs {(r.query_id, r.slot)}")
            prov = r.provenance(column)
            systems.add(r.run_id)
            groups.setdefault(prov.doc_id, {}).setdefault(r.run_id, []).extend(prov.spans)
        if qs is None:
            raise ValueError("provenance pool is empty")
        frozen = {
            doc: {sid: tuple(sorted(set(sp))) for sid, sp in sorted(members.items())}
            for doc, members in sorted(groups.items())
        }
        return cls(qs[0], qs[1], len(systems), frozen)

    def doc_group(self, system: str, doc_id: str) -> dict[str, tuple]:
        members = self.groups.get(doc_id, {})
        if system not in members:
            raise KeyError(f"system {system!r} did not cite {doc_id!r} for {self.query_id}/{self.slot}")
        return members


def document_provenance_score(group: ProvenanceGroup, system: str, doc_id: str | None = None) -> float:
    """n/N for the document ``system`` cites (its only document when ``doc_id`` is omitted)."""
    doc_id = _resolve_doc(group, system, doc_id)
    return len(group.doc_group(system, doc_id)) / group.n_total


def offset_provenance_score(group: ProvenanceGroup, system: str, doc_id: str | None = None,
                            spans: Sequence[tuple[int, int]] | None = None) -> float:
    doc_id = _resolve_doc(group, system, doc_id)
    members = group.doc_group(system, doc_id)
    own = spans if spans is not None else members[system]
    total = sum(span_jaccard(sp, own) for sid, sp in members.items() if sid != system)
    return total / len(members)


def _resolve_doc(group: ProvenanceGroup, system: str, doc_id):
    if doc_id is not None:
        return doc_id
    docs = [d for d, m in group.groups.items() if system in m]
    if not docs:
        raise KeyError(f"system {system!r} did not answer {group.query_id}/{group.slot}")
    if len(docs) > 1:
        raise ValueError(f"system {system!r} cites several documents; pass doc_id")
    return docs[0]


_REDUCERS = {"max": max, "mean": fmean}


def candidate_provenance_features(candidate: Candidate, pool: Iterable[ResponseLine] | ProvenanceGroup,
                                  column: str = FILLER, dps_reduce: str = "max",
                                  op_reduce: str = "mean") -> tuple[float, float]:
    """(document score, offset score) for a candidate, reduced over its producers.

    ``pool`` is every response for the candidate's (query, slot), or a
    pre-built group for it.
    """
    group = pool if isinstance(pool, ProvenanceGroup) else ProvenanceGroup.from_responses(pool, column)
    dps, op = [], []
    for sid in candidate.systems:
        prov: Provenance = candidate.responses[sid].provenance(column)
        dps.append(document_provenance_score(group, sid, prov.doc_id))
        op.append(offset_provenance_score(group, sid, prov.doc_id, prov.spans))
    return _REDUCERS[dps_reduce](dps), _REDUCERS[op_reduce](op)
