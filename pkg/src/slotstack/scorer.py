"""Precision / recall / F1 of a run against a key.

Simplified relative to the official TAC scorer: responses match key entries on
(query, slot, normalized fill) only, optionally widened to alias groups.
Provenance justification is not checked.

With an alias table, fills of one (query, slot) whose alias sets intersect
form one equivalence class.  A class counts once towards gold and once
towards correct; every extra response in the same class is returned but
marked redundant, so it lowers precision.
"""
from __future__ import annotations

import csv
import io
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .ingest import AliasTable
from .model import Judgment, KeyEntry, Origin, ResponseLine
from .unionfind import UnionFind

log = logging.getLogger(__name__)

MODES = ("official", "unofficial")


def prf(correct: int, returned: int, gold: int) -> tuple[float, float, float]:
    p = correct / returned if returned else 0.0
    r = correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class Counts:
    correct: int = 0
    returned: int = 0
    gold: int = 0
    redundant: int = 0

    @property
    def prf(self):
        return prf(self.correct, self.returned, self.gold)


@dataclass
class ScoreReport:
    mode: str
    correct: int
    returned: int
    gold: int
    precision: float
    recall: float
    f1: float
    per_slot: dict[str, Counts] = field(default_factory=dict)
    redundant: int = 0
    unassessed: int = 0

    def to_text(self) -> str:
        rows = [("slot", "correct", "returned", "gold", "P", "R", "F1")]
        for slot, c in sorted(self.per_slot.items()):
            p, r, f = c.prf
            rows.append((slot, str(c.correct), str(c.returned), str(c.gold), f"{p:.4f}", f"{r:.4f}", f"{f:.4f}"))
        rows.append(("ALL", str(self.correct), str(self.returned), str(self.gold),
                     f"{self.precision:.4f}", f"{self.recall:.4f}", f"{self.f1:.4f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = [f"# mode={self.mode} redundant={self.redundant} unassessed={self.unassessed}"]
        for r in rows:
            lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slot", "correct", "returned", "gold", "precision", "recall", "f1"])
        for slot, c in sorted(self.per_slot.items()):
            w.writerow([slot, c.correct, c.returned, c.gold, *(f"{v:.6f}" for v in c.prf)])
        w.writerow(["ALL", self.correct, self.returned, self.gold,
                    f"{self.precision:.6f}", f"{self.recall:.6f}", f"{self.f1:.6f}"])
        return buf.getvalue()


def score_triples(triples: Iterable[tuple[str, str, str]], key: Iterable[KeyEntry], mode: str = "official",
                  alias_table: Optional[AliasTable] = None) -> ScoreReport:
    """Score a set of (query_id, slot, fill_norm) responses."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    key = [e for e in key if mode == "official" or e.origin is Origin.POOLED]
    judged = {e.key: e.judgment for e in key}
    gold_by: dict[tuple[str, str], set[str]] = defaultdict(set)
    for e in key:
        if e.judgment is Judgment.CORRECT:
            gold_by[(e.query_id, e.slot)].add(e.fill_norm)
    resp_by: dict[tuple[str, str], set[str]] = defaultdict(set)
    for q, s, f in triples:
        resp_by[(q, s)].add(f)
    key_queries = {e.query_id for e in key}

    per_slot: dict[str, Counts] = defaultdict(Counts)
    unassessed = unknown_query = 0
    for qs in sorted(set(gold_by) | set(resp_by)):
        gold, resp = gold_by.get(qs, set()), resp_by.get(qs, set())
        classes = _classes(gold | resp, alias_table)
        c = per_slot[qs[1]]
        hit_classes = set()
        gold_classes = {classes[g] for g in gold}
        c.gold += len(gold_classes)
        for f in sorted(resp):
            c.returned += 1
            if (qs[0], qs[1], f) not in judged:
                unassessed += 1
                if qs[0] not in key_queries:
                    unknown_query += 1
            cls = classes[f]
            if cls in gold_classes:
                if cls in hit_classes:
                    c.redundant += 1
                else:
                    hit_classes.add(cls)
                    c.correct += 1
    if unassessed:
        log.info("%d returned responses were not assessed in the key and count as wrong", unassessed)
    if unknown_query:
        log.warning("%d responses reference queries absent from the key", unknown_query)
    tot = Counts(*(sum(getattr(c, a) for c in per_slot.values()) for a in ("correct", "returned", "gold", "redundant")))
    p, r, f = tot.prf
    return ScoreReport(mode, tot.correct, tot.returned, tot.gold, p, r, f, dict(per_slot),
                       tot.redundant, unassessed)


def _classes(fills: set[str], alias_table: Optional[AliasTable]) -> dict[str, str]:
    """Map each fill to a canonical representative of its alias class."""
    if alias_table is None or len(alias_table) == 0:
        return {f: f for f in fills}
    uf = UnionFind()
    owner: dict[str, str] = {}
    for f in sorted(fills):
        uf.find(f)
        for a in alias_table.alias_set(f):
            if a in owner:
                uf.union(owner[a], f)
            else:
                owner[a] = f
    return {f: uf.find(f) for f in fills}


def score(lines: Iterable[ResponseLine], key: Iterable[KeyEntry], mode: str = "official",
          alias_table: Optional[AliasTable] = None) -> ScoreReport:
    return score_triples(((l.query_id, l.slot, l.fill_norm) for l in lines if not l.is_nil),
                         key, mode, alias_table)


def compare_reports(a: ScoreReport, b: ScoreReport) -> list[tuple[str, str, float]]:
    """Rows (scope, metric, b - a) for overall and per-slot P/R/F1."""
    if a.mode != b.mode:
        raise ValueError(f"cannot compare reports scored in {a.mode!r} and {b.mode!r} mode")
    rows = [("ALL", m, getattr(b, m) - getattr(a, m)) for m in ("precision", "recall", "f1")]
    for slot in sorted(set(a.per_slot) | set(b.per_slot)):
        pa = a.per_slot.get(slot, Counts()).prf
        pb = b.per_slot.get(slot, Counts()).prf
        rows += [(slot, m, y - x) for m, x, y in zip(("precision", "recall", "f1"), pa, pb)]
    return rows


def format_deltas(rows) -> str:
    return "".join(f"{scope}\t{metric}\t{d:+.4f}\n" for scope, metric, d in rows)
