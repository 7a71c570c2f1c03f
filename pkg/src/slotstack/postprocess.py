"""Final output shaping for the stacked ensemble."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Iterable, Mapping, Optional, Sequence

from .ingest import AliasTable, _read_text, _rows
from .meta import Prediction
from .model import DataError, Provenance, Query, ResponseLine, normalize_fill
from .slots import DEFAULT_SLOT_CLASSES, is_single
from .unionfind import UnionFind

log = logging.getLogger(__name__)


def _rank(p: Prediction):
    return (-p.probability, p.candidate.fill_norm)


def _keep_best(groups: Iterable[list[Prediction]]) -> list[Prediction]:
    return [min(g, key=_rank) for g in groups]


def eliminate_aliases(preds: Sequence[Prediction], aliases: Optional[AliasTable]) -> list[Prediction]:
    """Collapse fills of one (query, slot) whose alias sets intersect; keep the most confident."""
    if not preds:
        return []
    uf = UnionFind(range(len(preds)))
    owner: dict[str, int] = {}
    for i, p in enumerate(preds):
        names = aliases.alias_set(p.candidate.fill_norm) if aliases is not None else {p.candidate.fill_norm}
        for a in names:
            if a in owner:
                uf.union(owner[a], i)
            else:
                owner[a] = i
    groups = [[preds[i] for i in sorted(m)] for m in uf.groups().values()]
    kept = _keep_best(groups)
    order = {id(p): i for i, p in enumerate(preds)}
    return sorted(kept, key=lambda p: order[id(p)])


_MONTHS = {m: i for i, m in enumerate(
    ["january", "february", "march", "april", "may", "june", "july", "august",
     "september", "october", "november", "december"], 1)}
_MONTHS.update({k[:3]: v for k, v in list(_MONTHS.items())})
_MONTHS["sept"] = 9


def normalize_date(text: str) -> Optional[str]:
    """ISO form of a (possibly partial) date: ``YYYY``, ``YYYY-MM`` or ``YYYY-MM-DD``.

    Returns None when the text is not recognized as a date.
    """
    t = normalize_fill(text).replace(".", "").strip()
    m = re.fullmatch(r"(\d{4})(?:-(\d{1,2})(?:-(\d{1,2}))?)?", t)
    if m:
        y, mo, d = m.groups()
        return _iso(int(y), mo and int(mo), d and int(d))
    m = re.fullmatch(r"(\d{1,2})/(\d{1,2})/(\d{4})", t)
    if m:
        return _iso(int(m.group(3)), int(m.group(1)), int(m.group(2)))
    m = re.fullmatch(r"([a-z]+)\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{4})", t)
    if m and m.group(1) in _MONTHS:
        return _iso(int(m.group(3)), _MONTHS[m.group(1)], int(m.group(2)))
    m = re.fullmatch(r"(\d{1,2})(?:st|nd|rd|th)?\s+([a-z]+),?\s+(\d{4})", t)
    if m and m.group(2) in _MONTHS:
        return _iso(int(m.group(3)), _MONTHS[m.group(2)], int(m.group(1)))
    m = re.fullmatch(r"([a-z]+),?\s+(\d{4})", t)
    if m and m.group(1) in _MONTHS:
        return _iso(int(m.group(2)), _MONTHS[m.group(1)], None)
    return None


def _iso(y, mo, d):
    try:
        if d:
            return datetime(y, mo, d).strftime("%Y-%m-%d")
        if mo:
            if not 1 <= mo <= 12:
                return None
            return f"{y:04d}-{mo:02d}"
        return f"{y:04d}"
    except ValueError:
        return None


def normalize_number(text: str) -> Optional[float]:
    t = normalize_fill(text).replace(",", "")
    try:
        return float(t)
    except ValueError:
        return None


def normal_form(fill: str, value_class: str):
    if value_class == "date":
        d = normalize_date(fill)
        if d is not None:
            return ("date", d)
    elif value_class == "numeric":
        n = normalize_number(fill)
        if n is not None:
            return ("num", n)
    return ("str", normalize_fill(fill))


def simple_dedup(preds: Sequence[Prediction], value_class: str) -> list[Prediction]:
    """Merge fills with equal date / numeric / string normal forms, keeping the most confident."""
    groups: dict = {}
    for p in preds:
        groups.setdefault(normal_form(p.candidate.fill_norm, value_class), []).append(p)
    kept = {id(p) for p in _keep_best(groups.values())}
    return [p for p in preds if id(p) in kept]


def select_single_valued(preds: Sequence[Prediction]) -> list[Prediction]:
    """Keep accepted predictions; a single-valued slot keeps only its most probable fill."""
    out = []
    for (_, slot), group in candidates_by_key_pred([p for p in preds if p.accepted]).items():
        if is_single(slot):
            out.append(min(group, key=_rank))
        else:
            out.extend(group)
    return out


def candidates_by_key_pred(preds: Iterable[Prediction]) -> dict[tuple[str, str], list[Prediction]]:
    out: dict = {}
    for p in preds:
        out.setdefault((p.candidate.query_id, p.candidate.slot), []).append(p)
    return out


def postprocess(preds: Sequence[Prediction], aliases: Optional[AliasTable] = None,
                slot_classes: Mapping[str, str] = DEFAULT_SLOT_CLASSES) -> list[Prediction]:
    """Single-valued selection, then alias / normal-form deduplication per (query, slot)."""
    out = []
    for (_, slot), group in candidates_by_key_pred(select_single_valued(preds)).items():
        cls = slot_classes.get(slot, "entity")
        if cls == "entity":
            out.extend(eliminate_aliases(group, aliases))
        else:
            out.extend(simple_dedup(group, cls))
    return sorted(out, key=lambda p: p.candidate.key)


def to_run_lines(preds: Iterable[Prediction], run_id: str = "STACKED",
                 queries: Optional[Iterable[Query]] = None) -> list[ResponseLine]:
    """Final run: one line per kept prediction, NIL lines for queried slots left empty."""
    lines = []
    answered = set()
    for p in preds:
        best = p.candidate.best_response()
        lines.append(ResponseLine(best.query_id, best.slot, run_id, best.relation_provenance,
                                  best.filler, best.filler_provenance, p.probability))
        answered.add((best.query_id, best.slot))
    if queries is not None:
        for q in queries:
            for s in q.slots:
                if (q.id, s) not in answered:
                    lines.append(ResponseLine(q.id, s, run_id))
    lines.sort(key=lambda l: (l.query_id, l.slot, l.is_nil, l.fill_norm))
    return lines


# --- NIL clusters (entity discovery and linking) -----------------------------------------

_NIL_RE = re.compile(r"NIL\d+")


@dataclass(frozen=True)
class MentionLink:
    system_id: str
    mention: str
    provenance: Provenance
    cluster_id: str
    confidence: float = 1.0

    @property
    def is_nil(self) -> bool:
        return _NIL_RE.fullmatch(self.cluster_id) is not None

    def sort_key(self):
        return (self.system_id, self.cluster_id, self.mention, self.provenance.doc_id, self.provenance.spans)


def merge_nil_clusters(links: Sequence[MentionLink], exact_offsets: bool = False) -> list[MentionLink]:
    """Merge per-system NIL clusters that share a mention, then renumber them.

    Two NIL clusters merge when they contain the same (normalized mention,
    document) pair, or (mention, document, spans) with ``exact_offsets``.
    Merged components get fresh ids NIL0001, NIL0002, ... ordered by their
    smallest member, so the labels do not depend on input order.  KB-linked
    entries are returned unchanged.
    """
    uf = UnionFind()
    first_owner: dict = {}
    for link in links:
        if not link.is_nil:
            continue
        node = (link.system_id, link.cluster_id)
        uf.find(node)
        mkey = (normalize_fill(link.mention), link.provenance.doc_id)
        if exact_offsets:
            mkey += (link.provenance.spans,)
        if mkey in first_owner:
            uf.union(first_owner[mkey], node)
        else:
            first_owner[mkey] = node
    smallest: dict = {}
    for link in links:
        if link.is_nil:
            root = uf.find((link.system_id, link.cluster_id))
            k = link.sort_key()
            if root not in smallest or k < smallest[root]:
                smallest[root] = k
    width = max(4, len(str(len(smallest))))
    fresh = {root: f"NIL{i:0{width}d}" for i, root in enumerate(sorted(smallest, key=smallest.get), 1)}
    return [replace(l, cluster_id=fresh[uf.find((l.system_id, l.cluster_id))]) if l.is_nil else l
            for l in links]


def parse_links(source) -> list[MentionLink]:
    out = []
    for lineno, cols in _rows(_read_text(source)):
        if len(cols) != 7:
            raise DataError(f"link line {lineno}: expected 7 columns")
        sid, mention, doc, start, end, cluster, conf = cols
        try:
            prov = Provenance(doc, ((int(start), int(end)),))
            out.append(MentionLink(sid, mention, prov, cluster, float(conf)))
        except ValueError as e:
            raise DataError(f"link line {lineno}: {e}") from None
    return out


def write_links(links: Iterable[MentionLink]) -> bytes:
    rows = []
    for l in links:
        s, e = l.provenance.spans[0]
        rows.append(f"{l.system_id}\t{l.mention}\t{l.provenance.doc_id}\t{s}\t{e}\t{l.cluster_id}\t{l.confidence:.6f}\n")
    return "".join(rows).encode("utf-8")
