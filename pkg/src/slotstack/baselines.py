"""Union and voting ensembles plus threshold selection."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .model import Candidate, KeyEntry, candidates_by_key
from .scorer import ScoreReport, score_triples
from .slots import is_single


@dataclass(frozen=True)
class VotingConfig:
    k: int
    pool_size: int

    def __post_init__(self):
        if not 1 <= self.k <= self.pool_size:
            raise ValueError(f"voting threshold {self.k} outside 1..{self.pool_size}")


@dataclass
class PrCurve:
    rows: list[tuple[int, float, float, float]]
    oracle: bool = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.oracle:
            buf.write("# oracle: threshold chosen using test labels\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "precision", "recall", "f1"])
        for k, p, r, f in self.rows:
            w.writerow([k, f"{p:.6f}", f"{r:.6f}", f"{f:.6f}"])
        return buf.getvalue()


def pool_size(candidates: Iterable[Candidate]) -> int:
    return len({s for c in candidates for s in c.responses})


def _resolve_single(selected: list[Candidate]) -> list[Candidate]:
    out = []
    for (_, slot), group in candidates_by_key(selected).items():
        if is_single(slot) and len(group) > 1:
            out.append(min(group, key=lambda c: (-c.max_confidence(), c.fill_norm)))
        else:
            out.extend(group)
    return out


def union_ensemble(candidates: Sequence[Candidate]) -> list[Candidate]:
    """Every candidate, except that a single-valued slot keeps only its most confident fill."""
    return _resolve_single(list(candidates))


def voting_ensemble(candidates: Sequence[Candidate], k: int, *, resolve_single: bool = True) -> list[Candidate]:
    """Candidates produced by at least ``k`` systems."""
    kept = [c for c in candidates if len(c.responses) >= k]
    return _resolve_single(kept) if resolve_single else kept


def score_selection(selected: Iterable[Candidate], key: Sequence[KeyEntry], mode: str = "official") -> ScoreReport:
    return score_triples((c.key for c in selected), key, mode)


def pr_curve(candidates: Sequence[Candidate], key: Sequence[KeyEntry], mode: str = "official",
             size: Optional[int] = None) -> PrCurve:
    size = size or pool_size(candidates)
    rows = []
    for k in range(1, size + 1):
        rep = score_selection(voting_ensemble(candidates, k), key, mode)
        rows.append((k, rep.precision, rep.recall, rep.f1))
    return PrCurve(rows)


def learn_threshold(candidates: Sequence[Candidate], key: Sequence[KeyEntry], mode: str = "official") -> int:
    """Agreement threshold with the best F1 on labeled (training) data; ties go to the smallest k."""
    if not candidates:
        raise ValueError("cannot learn a voting threshold from an empty pool")
    curve = pr_curve(candidates, key, mode)
    best = max(curve.rows, key=lambda r: (r[3], -r[0]))
    return best[0]


def oracle_threshold(candidates: Sequence[Candidate], key: Sequence[KeyEntry],
                     mode: str = "official") -> tuple[int, PrCurve]:
    """Best threshold chosen with the *test* key.  An upper bound on voting, not a deployable method."""
    if not candidates:
        raise ValueError("cannot sweep voting thresholds over an empty pool")
    curve = pr_curve(candidates, key, mode)
    curve.oracle = True
    best = max(curve.rows, key=lambda r: (r[3], -r[0]))
    return best[0], curve
