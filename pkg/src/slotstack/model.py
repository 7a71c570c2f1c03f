"""Domain types shared by every stage of the ensembler."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .slots import EntityType


class DataError(ValueError):
    """Malformed input data (bad file contents, inconsistent records)."""


_WS = re.compile(r"\s+")


def normalize_fill(raw: str) -> str:
    """Trim, collapse internal whitespace and case-fold a filler string."""
    return _WS.sub(" ", raw).strip().casefold()


# --- provenance --------------------------------------------------------------

@dataclass(frozen=True)
class Provenance:
    """A document id plus one or more inclusive character spans."""

    doc_id: str
    spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.doc_id:
            raise DataError("provenance needs a doc id")
        if not self.spans:
            raise DataError(f"provenance for {self.doc_id} has no spans")
        for start, end in self.spans:
            if start < 0 or end < start:
                raise DataError(f"bad span {start}-{end} in {self.doc_id}")

    @classmethod
    def parse(cls, text: str) -> "Provenance":
        """Parse ``docid:start-end[,docid:start-end...]``.

        Pieces after the first may omit the doc id.  All pieces must refer to
        the same document.
        """
        doc_id = None
        spans = []
        for piece in text.strip().split(","):
            piece = piece.strip()
            if ":" in piece:
                did, _, rng = piece.rpartition(":")
            elif doc_id is not None:
                did, rng = doc_id, piece
            else:
                raise DataError(f"provenance {text!r} lacks a doc id")
            if doc_id is None:
                doc_id = did
            elif did != doc_id:
                raise DataError(f"provenance {text!r} mixes documents {doc_id} and {did}")
            m = re.fullmatch(r"(\d+)-(\d+)", rng)
            if m is None:
                raise DataError(f"unparseable offsets {rng!r} in provenance {text!r}")
            spans.append((int(m.group(1)), int(m.group(2))))
        return cls(doc_id, tuple(spans))

    def __str__(self) -> str:
        return ",".join(f"{self.doc_id}:{s}-{e}" for s, e in self.spans)

    def positions(self) -> set[int]:
        out: set[int] = set()
        for s, e in self.spans:
            out.update(range(s, e + 1))
        return out


# --- responses and queries ---------------------------------------------------

@dataclass(frozen=True)
class ResponseLine:
    """One row of a system run file.  ``relation_provenance is None`` marks NIL."""

    query_id: str
    slot: str
    run_id: str
    relation_provenance: Optional[Provenance] = None
    filler: str = ""
    filler_provenance: Optional[Provenance] = None
    confidence: float = 1.0

    def __post_init__(self):
        nil = self.relation_provenance is None
        if nil and (self.filler or self.filler_provenance is not None):
            raise DataError(f"NIL response for {self.query_id}/{self.slot} carries a filler")
        if not nil and (not self.filler or self.filler_provenance is None):
            raise DataError(f"response for {self.query_id}/{self.slot} needs filler and both provenances")
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def is_nil(self) -> bool:
        return self.relation_provenance is None

    @property
    def fill_norm(self) -> str:
        return normalize_fill(self.filler)

    def provenance(self, column: str = "filler") -> Optional[Provenance]:
        return self.filler_provenance if column == "filler" else self.relation_provenance


@dataclass(frozen=True)
class Query:
    id: str
    name: str
    entity_type: EntityType
    doc_id: str
    span: tuple[int, int]
    slots: tuple[str, ...]


class Judgment(str, enum.Enum):
    CORRECT = "C"
    WRONG = "W"


class Origin(str, enum.Enum):
    POOLED = "P"
    MANUAL = "M"


@dataclass(frozen=True)
class KeyEntry:
    query_id: str
    slot: str
    fill_norm: str
    judgment: Judgment
    origin: Origin = Origin.POOLED

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.query_id, self.slot, self.fill_norm)


# --- candidates --------------------------------------------------------------

@dataclass(frozen=True)
class Candidate:
    """A distinct (query, slot, normalized fill) with every system response for it."""

    query_id: str
    slot: str
    fill_norm: str
    responses: Mapping[str, ResponseLine] = field(hash=False)
    label: Optional[bool] = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.query_id, self.slot, self.fill_norm)

    @property
    def systems(self) -> list[str]:
        return sorted(self.responses)

    def max_confidence(self) -> float:
        return max(r.confidence for r in self.responses.values())

    def best_response(self) -> ResponseLine:
        """Highest-confidence response; ties go to the smallest system id."""
        sid = min(self.responses, key=lambda s: (-self.responses[s].confidence, s))
        return self.responses[sid]

    def with_label(self, label: Optional[bool]) -> "Candidate":
        return Candidate(self.query_id, self.slot, self.fill_norm, self.responses, label)


def group_candidates(lines: Iterable[ResponseLine]) -> list[Candidate]:
    """Group non-NIL responses into one Candidate per (query, slot, fill_norm).

    When a system repeats itself for the same candidate the highest-confidence
    line wins (ties keep the first seen line in canonical order).  Output is
    sorted by candidate key, so the result is independent of input order.
    """
    buckets: dict[tuple[str, str, str], dict[str, ResponseLine]] = {}
    for i, line in enumerate(lines):
        if not isinstance(line, ResponseLine):
            raise DataError(f"line {i + 1}: expected ResponseLine, got {type(line).__name__}")
        if line.is_nil:
            continue
        resp = buckets.setdefault((line.query_id, line.slot, line.fill_norm), {})
        prev = resp.get(line.run_id)
        if prev is None or _line_order(line) < _line_order(prev):
            resp[line.run_id] = line
    return [
        Candidate(q, s, f, dict(sorted(resp.items())))
        for (q, s, f), resp in sorted(buckets.items())
    ]


def _line_order(line: ResponseLine):
    # max confidence first, then a content-based tiebreak so grouping is order free
    return (-line.confidence, line.filler, str(line.filler_provenance), str(line.relation_provenance))


def candidates_by_key(candidates: Iterable[Candidate]) -> dict[tuple[str, str], list[Candidate]]:
    """Bucket candidates by (query_id, slot), preserving order."""
    out: dict[tuple[str, str], list[Candidate]] = {}
    for c in candidates:
        out.setdefault((c.query_id, c.slot), []).append(c)
    return out
