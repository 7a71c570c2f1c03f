"""Unsupervised confidence aggregation for systems without training history.

For one key (query, slot) with distinct values V_1..V_M, value i reported by
N_i systems with raw confidences c_i(j) and weights w_ij, solve

    min  sum_i sum_j w_ij (x_i - c_i(j))^2
    s.t. 0 <= x_i <= 1,  sum_i x_i <= B

The objective is separable: with W_i = sum_j w_ij and m_i the weighted mean,
it equals sum_i W_i (x_i - m_i)^2 + const, so the minimizer for a multiplier
lam >= 0 on the budget is x_i(lam) = clip(m_i - lam / (2 W_i), 0, 1).  The
sum is non-increasing in lam, which makes a bisection on lam exact up to
tolerance; a final closed-form solve on the identified free set tightens it.
"""
from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .ingest import RunFile, team_of
from .model import (
    Candidate, DataError, Judgment, KeyEntry, Query, ResponseLine, group_candidates,
)
from .slots import SLOT_REGISTRY, is_single

log = logging.getLogger(__name__)

UNSUP_RUN_ID = "UNSUP_ENSEMBLE"


@dataclass(frozen=True)
class ValueObs:
    system_id: str
    confidence: float
    weight: float = 1.0


@dataclass
class AggregationProblem:
    key: tuple[str, str]
    values: list[str]
    observations: list[list[ValueObs]]
    budget: float

    def __post_init__(self):
        if not self.values:
            raise ValueError(f"aggregation problem {self.key} has no values")
        if len(self.values) != len(self.observations):
            raise ValueError("values and observations differ in length")
        if not self.budget > 0:
            raise ValueError(f"budget must be > 0, got {self.budget}")
        for obs in self.observations:
            if not obs:
                raise ValueError(f"value without observations in {self.key}")
            if any(not 0.0 <= o.confidence <= 1.0 or o.weight < 0 for o in obs):
                raise ValueError(f"confidence outside [0,1] or negative weight in {self.key}")
            if sum(o.weight for o in obs) <= 0:
                raise ValueError(f"value in {self.key} has zero total weight")

    @classmethod
    def from_arrays(cls, confidences: Sequence[Sequence[float]], budget: float,
                    weights: Optional[Sequence[Sequence[float]]] = None, key=("", "")) -> "AggregationProblem":
        obs = []
        for i, cs in enumerate(confidences):
            ws = weights[i] if weights is not None else [1.0] * len(cs)
            obs.append([ValueObs(f"s{j}", float(c), float(w)) for j, (c, w) in enumerate(zip(cs, ws))])
        return cls(key, [f"v{i}" for i in range(len(confidences))], obs, budget)

    def totals(self) -> tuple[np.ndarray, np.ndarray]:
        """(W_i, m_i) per value."""
        W = np.array([sum(o.weight for o in obs) for obs in self.observations])
        m = np.array([sum(o.weight * o.confidence for o in obs) for obs in self.observations]) / W
        return W, m


@dataclass
class AggregatedOutput:
    x: np.ndarray
    multiplier: float
    clipped_low: list[int] = field(default_factory=list)
    clipped_high: list[int] = field(default_factory=list)


def _x_of(lam, W, m):
    return np.clip(m - lam / (2.0 * W), 0.0, 1.0)


def solve_aggregation(problem: AggregationProblem, tol: float = 1e-10) -> AggregatedOutput:
    W, m = problem.totals()
    B = problem.budget
    x = np.clip(m, 0.0, 1.0)
    lam = 0.0
    if x.sum() > B:
        lo, hi = 0.0, float(2.0 * np.max(W * np.maximum(m, 0.0))) + 1.0
        for _ in range(200):
            lam = 0.5 * (lo + hi)
            s = _x_of(lam, W, m).sum()
            if abs(s - B) <= tol * 0.01:
                break
            if s > B:
                lo = lam
            else:
                hi = lam
        x = _x_of(lam, W, m)
        # closed form on the free set: sum_F (m_i - lam/(2W_i)) + #{x_i = 1} = B
        free = (x > 0.0) & (x < 1.0)
        if free.any():
            ones = np.sum(x >= 1.0)
            lam_exact = (m[free].sum() + ones - B) / np.sum(1.0 / (2.0 * W[free]))
            x_exact = _x_of(lam_exact, W, m)
            same_sets = np.array_equal((x_exact > 0) & (x_exact < 1), free)
            if lam_exact >= 0 and same_sets and abs(x_exact.sum() - B) <= abs(x.sum() - B):
                lam, x = float(lam_exact), x_exact
        if abs(x.sum() - B) > tol:
            log.warning("aggregation %s: budget residual %.3g", problem.key, x.sum() - B)
    return AggregatedOutput(x, float(lam), [int(i) for i in np.flatnonzero(x <= 0.0)],
                            [int(i) for i in np.flatnonzero(x >= 1.0)])


def kkt_residual(problem: AggregationProblem, out: AggregatedOutput) -> float:
    """Largest violation of the KKT conditions at ``out``."""
    W, m = problem.totals()
    x, lam = out.x, out.multiplier
    g = 2.0 * W * (x - m) + lam
    res = [max(0.0, -lam), max(0.0, x.sum() - problem.budget), abs(lam * (x.sum() - problem.budget))]
    free = (x > 0) & (x < 1)
    if free.any():
        res.append(float(np.max(np.abs(g[free]))))
    low, high = x <= 0, x >= 1
    if low.any():
        res.append(float(np.max(np.maximum(0.0, -g[low]))))
    if high.any():
        res.append(float(np.max(np.maximum(0.0, g[high]))))
    return max(res)


# --- budgets ----------------------------------------------------------------------

ENTITY_FALLBACK = {"FAC": "GPE", "LOC": "GPE"}


@dataclass
class BudgetTable:
    budgets: dict[str, float]
    diagnostics: dict[str, dict] = field(default_factory=dict)

    def get(self, name: str) -> float:
        """Budget for a slot or entity type; single-valued slots are always 1."""
        if name in SLOT_REGISTRY and is_single(name):
            return 1.0
        if name in self.budgets:
            return self.budgets[name]
        if name in ENTITY_FALLBACK and ENTITY_FALLBACK[name] in self.budgets:
            return self.budgets[ENTITY_FALLBACK[name]]
        return 1.0

    def write(self, path) -> None:
        Path(path).write_text("".join(f"{k}\t{v!r}\n" for k, v in sorted(self.budgets.items())), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "BudgetTable":
        out = {}
        with open(path, encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), 1):
                if not row:
                    continue
                if len(row) != 2:
                    raise DataError(f"{path}:{lineno}: budget rows need 2 columns")
                try:
                    b = float(row[1])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad budget {row[1]!r}") from None
                if not b > 0:
                    raise DataError(f"{path}:{lineno}: budget must be > 0")
                out[row[0]] = b
        return cls(out)


def estimate_budgets(key: Iterable[KeyEntry], responses: Iterable[ResponseLine],
                     queries: Optional[Iterable[Query]] = None,
                     inverse_map: Optional[Mapping[str, str]] = None,
                     slots: Optional[Iterable[str]] = None) -> BudgetTable:
    """Budget n_c / n per list-valued slot from a previous year's key and pool.

    n_c is the mean number of correct fills per queried entity and n the
    total number of (non-NIL) response lines for the slot across entities.
    The per-entity variant (n = mean lines per entity) is kept in the
    diagnostics.  Slots without data inherit a sibling's budget through
    ``inverse_map``, else default to 1.
    """
    if inverse_map is not None:
        for k, v in inverse_map.items():
            if not isinstance(k, str) or not isinstance(v, str) or not k or not v:
                raise DataError(f"malformed inverse slot mapping entry {k!r} -> {v!r}")
    correct: dict[str, int] = defaultdict(int)
    entities: dict[str, set] = defaultdict(set)
    fills: dict[str, int] = defaultdict(int)
    for e in key:
        entities[e.slot].add(e.query_id)
        if e.judgment is Judgment.CORRECT:
            correct[e.slot] += 1
    for r in responses:
        if not r.is_nil:
            fills[r.slot] += 1
            entities[r.slot].add(r.query_id)
    if queries is not None:
        entities = defaultdict(set)
        for q in queries:
            for s in q.slots:
                entities[s].add(q.id)
    names = set(slots or ()) | set(fills) | set(correct) | set(inverse_map or ())
    budgets, diag = {}, {}
    for slot in sorted(names):
        if slot in SLOT_REGISTRY and is_single(slot):
            budgets[slot] = 1.0
            continue
        n_ent = len(entities.get(slot, ()))
        n = fills.get(slot, 0)
        if n_ent and n and correct.get(slot, 0):
            n_c = correct[slot] / n_ent
            budgets[slot] = n_c / n
            diag[slot] = {"n_c": n_c, "n": n, "entities": n_ent, "per_entity": n_c / (n / n_ent)}
    for slot in sorted(names):
        if slot not in budgets:
            sib = (inverse_map or {}).get(slot)
            budgets[slot] = budgets.get(sib, 1.0) if sib else 1.0
    return BudgetTable(budgets, diag)


# --- team combining ---------------------------------------------------------------

def combine_team_runs(runs: Sequence[RunFile], team_id: Optional[str] = None) -> RunFile:
    """Merge the runs of one team into a single run.

    A fill shared by several runs becomes one line with the mean of the runs'
    confidences; the provenance comes from the most confident contributor.
    Fills found by a single run are kept as is.
    """
    if not runs:
        raise ValueError("no runs to combine")
    team = team_id or runs[0].team_id
    lines = [l for r in runs for l in r.lines]
    out = []
    answered = set()
    for cand in group_candidates(lines):
        answered.add((cand.query_id, cand.slot))
        best = cand.best_response()
        conf = fmean(r.confidence for r in cand.responses.values())
        out.append(ResponseLine(cand.query_id, cand.slot, team, best.relation_provenance,
                                best.filler, best.filler_provenance, conf))
    for q, s in sorted({(l.query_id, l.slot) for l in lines if l.is_nil} - answered):
        out.append(ResponseLine(q, s, team))
    out.sort(key=lambda l: (l.query_id, l.slot, l.fill_norm))
    return RunFile(team, team, out)


def combine_by_team(runs: Sequence[RunFile], roster: Optional[Mapping[str, str]] = None) -> list[RunFile]:
    teams: dict[str, list[RunFile]] = defaultdict(list)
    for r in runs:
        teams[team_of(r.run_id, roster) if roster else r.team_id].append(r)
    return [combine_team_runs(rs, t) for t, rs in sorted(teams.items())]


def build_unsupervised_ensemble(runs: Sequence[RunFile], budgets: BudgetTable,
                                run_id: str = UNSUP_RUN_ID) -> RunFile:
    """Fuse already team-combined runs into one pseudo-system via ``solve_aggregation``."""
    if not runs:
        log.info("no unsupervised systems configured; ensemble is empty")
        return RunFile(run_id, run_id, [])
    cands = group_candidates([l for r in runs for l in r.lines])
    by_key: dict[tuple[str, str], list[Candidate]] = defaultdict(list)
    for c in cands:
        by_key[(c.query_id, c.slot)].append(c)
    out = []
    for (qid, slot), group in sorted(by_key.items()):
        problem = AggregationProblem(
            (qid, slot), [c.fill_norm for c in group],
            [[ValueObs(s, r.confidence, 1.0) for s, r in sorted(c.responses.items())] for c in group],
            budgets.get(slot))
        sol = solve_aggregation(problem)
        for c, xi in zip(group, sol.x):
            best = c.best_response()
            out.append(ResponseLine(qid, slot, run_id, best.relation_provenance, best.filler,
                                    best.filler_provenance, float(xi)))
    return RunFile(run_id, run_id, out)
