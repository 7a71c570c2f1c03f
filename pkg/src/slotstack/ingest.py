"""Readers and writers for every on-disk format the ensembler touches.

Formats (all UTF-8, tab separated unless noted):

* run file   -- ``qid slot run_id relprov filler fillprov conf``; NIL rows are
  ``qid slot run_id NIL``.  The 2013 layout has an extra entity-provenance
  column: ``qid slot run_id justprov filler fillprov entprov conf``.
* query file -- XML, one ``<query id=..>`` element per query.
* key file   -- ``qid slot fill C|W [P|M]``.
* alias file -- ``canonical alias count``.
* corpus     -- a directory of ``<doc_id>.txt`` files.
"""
from __future__ import annotations

import io
import logging
import math
import os
import re
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .model import (
    DataError, Judgment, KeyEntry, Origin, Provenance, Query, ResponseLine,
    normalize_fill,
)
from .slots import EntityType, is_registered, slots_for

log = logging.getLogger(__name__)

NIL = "NIL"
Source = Union[str, os.PathLike, bytes, io.IOBase]


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, io.IOBase):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    return Path(source).read_text(encoding="utf-8")


def _rows(text: str):
    # splitlines() treats \r\n and \n alike and ignores a trailing newline
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        yield lineno, raw.split("\t")


def team_of(run_id: str, roster: Optional[Mapping[str, str]] = None) -> str:
    """Team identity of a run: roster override, else the prefix before the first '_'."""
    if roster and run_id in roster:
        return roster[run_id]
    return run_id.split("_", 1)[0]


# --- run files ---------------------------------------------------------------

@dataclass
class RunFile:
    run_id: str
    team_id: str
    lines: list[ResponseLine] = field(default_factory=list)


def parse_run_lines(source: Source, *, strict: bool = False, fmt: str = "2014") -> list[ResponseLine]:
    """Parse a run file into ResponseLines.

    Confidences outside [0, 1] are clamped with a warning.  Unknown slot names
    are skipped with a warning, or raise in ``strict`` mode.  NIL rows may be
    padded with empty columns.
    """
    if fmt not in ("2013", "2014"):
        raise ValueError(f"unknown run format {fmt!r}")
    width = 8 if fmt == "2013" else 7
    name = getattr(source, "name", source) if not isinstance(source, bytes) else "<bytes>"
    out = []
    for lineno, cols in _rows(_read_text(source)):
        where = f"{name}:{lineno}"
        if len(cols) >= 4 and cols[3] == NIL:
            if len(cols) > 4 and (strict or any(c.strip() for c in cols[4:]) or len(cols) > width):
                raise DataError(f"{where}: NIL row must have 4 columns, got {len(cols)}")
            qid, slot, run_id = cols[:3]
            if not _slot_ok(slot, where, strict):
                continue
            out.append(ResponseLine(qid, slot, run_id))
            continue
        if len(cols) != width:
            raise DataError(f"{where}: expected {width} columns, got {len(cols)}")
        if fmt == "2014":
            qid, slot, run_id, relprov, filler, fillprov, conf = cols
        else:
            # assumed 2013 order: justification, filler, filler prov, entity prov
            qid, slot, run_id, relprov, filler, fillprov, _entprov, conf = cols
        if not _slot_ok(slot, where, strict):
            continue
        try:
            rel = Provenance.parse(relprov)
            fp = Provenance.parse(fillprov)
        except DataError as e:
            raise DataError(f"{where}: {e}") from None
        try:
            c = float(conf)
        except ValueError:
            raise DataError(f"{where}: bad confidence {conf!r}") from None
        if math.isnan(c):
            raise DataError(f"{where}: confidence is NaN")
        if not 0.0 <= c <= 1.0:
            log.warning("%s: confidence %s clamped to [0, 1]", where, conf)
            c = min(1.0, max(0.0, c))
        if not filler.strip():
            raise DataError(f"{where}: empty filler on a non-NIL row")
        out.append(ResponseLine(qid, slot, run_id, rel, filler, fp, c))
    return out


def _slot_ok(slot: str, where: str, strict: bool) -> bool:
    if is_registered(slot):
        return True
    if strict:
        raise DataError(f"{where}: unknown slot {slot!r}")
    log.warning("%s: unknown slot %r skipped", where, slot)
    return False


def parse_run_file(source: Source, *, strict: bool = False, fmt: str = "2014",
                   roster: Optional[Mapping[str, str]] = None) -> RunFile:
    lines = parse_run_lines(source, strict=strict, fmt=fmt)
    run_ids = {l.run_id for l in lines}
    if len(run_ids) > 1:
        raise DataError(f"run file mixes run ids {sorted(run_ids)}")
    if run_ids:
        run_id = run_ids.pop()
    elif isinstance(source, (str, os.PathLike)):
        run_id = Path(source).stem
    else:
        run_id = ""
    return RunFile(run_id, team_of(run_id, roster), lines)


def format_line(line: ResponseLine) -> str:
    if line.is_nil:
        return f"{line.query_id}\t{line.slot}\t{line.run_id}\t{NIL}"
    return "\t".join((line.query_id, line.slot, line.run_id, str(line.relation_provenance),
                      line.filler, str(line.filler_provenance), f"{line.confidence:.6f}"))


def write_run_file(lines: Iterable[ResponseLine]) -> bytes:
    return "".join(format_line(l) + "\n" for l in lines).encode("utf-8")


def load_runs(directory, *, strict: bool = False, fmt: str = "2014",
              roster: Optional[Mapping[str, str]] = None, jobs: int = 1) -> list[RunFile]:
    """Parse every ``*.tsv`` run file in ``directory`` (sorted by file name)."""
    paths = sorted(Path(directory).glob("*.tsv"))

    def one(p):
        return parse_run_file(p, strict=strict, fmt=fmt, roster=roster)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(jobs) as ex:
            return list(ex.map(one, paths))
    return [one(p) for p in paths]


def load_roster(path) -> dict[str, str]:
    """``run_id<TAB>team_id`` overrides for team identity."""
    out = {}
    for lineno, cols in _rows(_read_text(path)):
        if len(cols) != 2:
            raise DataError(f"{path}:{lineno}: roster rows need 2 columns")
        out[cols[0]] = cols[1]
    return out


# --- queries -----------------------------------------------------------------

def parse_queries(source: Source) -> list[Query]:
    text = _read_text(source) if not (isinstance(source, str) and source.lstrip().startswith("<")) else source
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise DataError(f"query XML: {e}") from None
    elems = [root] if root.tag == "query" else root.iter("query")
    out, seen = [], set()
    for q in elems:
        qid = q.get("id")
        if not qid:
            raise DataError("query element without id attribute")
        if qid in seen:
            raise DataError(f"duplicate query id {qid}")
        seen.add(qid)

        def child(tag):
            el = q.find(tag)
            if el is None or el.text is None or not el.text.strip():
                raise DataError(f"query {qid}: missing <{tag}>")
            return el.text.strip()

        try:
            etype = EntityType.parse(child("enttype"))
            beg, end = int(child("beg")), int(child("end"))
        except ValueError as e:
            raise DataError(f"query {qid}: {e}") from None
        slot_elems = []
        for el in q:
            m = re.fullmatch(r"slot(\d*)", el.tag)
            if m and el.text and el.text.strip():
                slot_elems.append((int(m.group(1) or 0), el.text.strip()))
        slots = tuple(s for _, s in sorted(slot_elems, key=lambda t: t[0])) or tuple(slots_for(etype))
        out.append(Query(qid, child("name"), etype, child("docid"), (beg, end), slots))
    return out


def write_queries(queries: Iterable[Query]) -> bytes:
    parts = ["<?xml version='1.0' encoding='UTF-8'?>\n<kbpslotfill>\n"]
    for q in queries:
        parts.append(f'  <query id="{_xml(q.id)}">\n')
        parts.append(f"    <name>{_xml(q.name)}</name>\n")
        parts.append(f"    <docid>{_xml(q.doc_id)}</docid>\n")
        parts.append(f"    <beg>{q.span[0]}</beg>\n    <end>{q.span[1]}</end>\n")
        parts.append(f"    <enttype>{q.entity_type.value.lower()}</enttype>\n")
        for i, s in enumerate(q.slots):
            parts.append(f"    <slot{i}>{_xml(s)}</slot{i}>\n")
        parts.append("  </query>\n")
    parts.append("</kbpslotfill>\n")
    return "".join(parts).encode("utf-8")


def _xml(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


# --- keys ----------------------------------------------------------------------

def parse_key(source: Source) -> list[KeyEntry]:
    out: dict[tuple[str, str, str], KeyEntry] = {}
    for lineno, cols in _rows(_read_text(source)):
        if len(cols) not in (4, 5):
            raise DataError(f"key line {lineno}: expected 4 or 5 columns, got {len(cols)}")
        qid, slot, fill, code = cols[:4]
        try:
            judgment = Judgment(code)
        except ValueError:
            raise DataError(f"key line {lineno}: unknown judgment {code!r}") from None
        try:
            origin = Origin(cols[4]) if len(cols) == 5 else Origin.POOLED
        except ValueError:
            raise DataError(f"key line {lineno}: unknown origin {cols[4]!r}") from None
        entry = KeyEntry(qid, slot, normalize_fill(fill), judgment, origin)
        prev = out.get(entry.key)
        if prev is not None:
            if prev.judgment != entry.judgment:
                raise DataError(f"key line {lineno}: conflicting judgments for {entry.key}")
            continue
        out[entry.key] = entry
    return list(out.values())


def write_key(entries: Iterable[KeyEntry]) -> bytes:
    return "".join(
        f"{e.query_id}\t{e.slot}\t{e.fill_norm}\t{e.judgment.value}\t{e.origin.value}\n" for e in entries
    ).encode("utf-8")


# --- alias table -----------------------------------------------------------------

class AliasTable:
    """Top-N anchor-text aliases per canonical name."""

    def __init__(self, entries: Mapping[str, list[tuple[str, int]]]):
        self.entries = dict(entries)
        self._norm: dict[str, list[tuple[str, int]]] = {}
        for canon, aliases in self.entries.items():
            self._norm.setdefault(normalize_fill(canon), []).extend(aliases)

    def lookup(self, name: str) -> list[tuple[str, int]]:
        if name in self.entries:
            return list(self.entries[name])
        return list(self._norm.get(normalize_fill(name), []))

    def alias_set(self, fill: str) -> frozenset[str]:
        """The normalized fill together with its normalized aliases."""
        f = normalize_fill(fill)
        return frozenset([f, *(normalize_fill(a) for a, _ in self.lookup(f))])

    def __len__(self):
        return len(self.entries)


def load_alias_table(source: Source, n_max: int = 10) -> AliasTable:
    raw: dict[str, list[tuple[str, int]]] = {}
    for lineno, cols in _rows(_read_text(source)):
        if len(cols) != 3:
            raise DataError(f"alias line {lineno}: expected 3 columns")
        canon, alias, count = cols
        if not re.fullmatch(r"\d+", count.strip()) or int(count) <= 0:
            raise DataError(f"alias line {lineno}: count {count!r} is not a positive integer")
        raw.setdefault(canon, []).append((alias, int(count)))
    return AliasTable({c: sorted(a, key=lambda t: (-t[1], t[0]))[:n_max] for c, a in raw.items()})


# --- corpus ----------------------------------------------------------------------

_TOKEN_SPLIT = re.compile(r"[\W_]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass
class CorpusIndex:
    term_freqs: dict[str, Counter]
    doc_freq: Counter

    @property
    def n_docs(self) -> int:
        return len(self.term_freqs)

    def __contains__(self, doc_id) -> bool:
        return doc_id in self.term_freqs

    @classmethod
    def from_texts(cls, texts: Mapping[str, str]) -> "CorpusIndex":
        tfs = {doc: Counter(tokenize(texts[doc])) for doc in sorted(texts)}
        df: Counter = Counter()
        for tf in tfs.values():
            df.update(tf.keys())
        return cls(tfs, df)


def build_corpus_index(directory) -> CorpusIndex:
    texts = {}
    for p in sorted(Path(directory).glob("*.txt")):
        try:
            texts[p.stem] = p.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise DataError(f"cannot read corpus file {p}: {e}") from None
    return CorpusIndex.from_texts(texts)
