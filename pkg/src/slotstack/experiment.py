"""Synthetic experiments: stacker vs baselines, learning curves, incremental systems."""
from __future__ import annotations

import csv
import io
import logging
import time
from math import nan
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .baselines import learn_threshold, oracle_threshold, union_ensemble, voting_ensemble
from .ingest import CorpusIndex
from .meta import featurize, predict
from .model import Judgment
from .pipeline import (
    PipelineOptions, YearData, default_roster, featurize_year, finalize, fit, make_layout, resolve_budgets,
    year_candidates,
)
from .scorer import score, score_triples
from .synth import Bundle, GeneratorConfig, generate

log = logging.getLogger(__name__)


def year_from_bundle(b: Bundle, with_corpus: bool = True) -> YearData:
    return YearData(runs=list(b.runs), queries=list(b.queries), key=list(b.key),
                    index=CorpusIndex.from_texts(b.corpus) if with_corpus else None, budgets=b.budgets)


@dataclass
class ExperimentRow:
    setting: str
    method: str
    precision: float
    recall: float
    f1: float


@dataclass
class ExperimentReport:
    rows: list[ExperimentRow] = field(default_factory=list)
    seconds: float = 0.0

    def add(self, setting, method, rep):
        self.rows.append(ExperimentRow(setting, method, rep.precision, rep.recall, rep.f1))

    def f1(self, method: str, setting: str = "main") -> float:
        for r in self.rows:
            if r.method == method and r.setting == setting:
                return r.f1
        raise KeyError((setting, method))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["setting", "method", "precision", "recall", "f1"])
        for r in self.rows:
            w.writerow([r.setting, r.method, f"{r.precision:.6f}", f"{r.recall:.6f}", f"{r.f1:.6f}"])
        return buf.getvalue()


def run_experiment(cfg: GeneratorConfig, opts: Optional[PipelineOptions] = None, *,
                   learning_curve: Sequence[float] = (), incremental: bool = False,
                   compare: bool = True, baselines: bool = True,
                   bundles: Optional[tuple[Bundle, Bundle]] = None) -> ExperimentReport:
    """Train on the first bundle, evaluate on the second.

    ``compare`` adds the stacker and, unless ``baselines`` is off, every
    baseline; ``learning_curve`` adds a
    stacker row per training fraction; ``incremental`` adds one row per system
    added to the training pool (most false positives first).
    """
    opts = opts or PipelineOptions()
    t0 = time.perf_counter()
    need_corpus = any(g in opts.features for g in ("QSIM", "PSIM"))
    tr_b, te_b = bundles if bundles is not None else generate(cfg)
    tr, te = year_from_bundle(tr_b, need_corpus), year_from_bundle(te_b, need_corpus)
    roster = default_roster(tr, te, opts)
    budgets = resolve_budgets(tr, roster, opts)
    tr_c = year_candidates(tr, roster, opts, budgets)
    te_c = year_candidates(te, roster, opts, budgets)
    layout = make_layout(tr_c, roster, opts)
    tr_v = featurize_year(tr_c, layout, tr, opts, training=True)
    te_v = featurize_year(te_c, layout, te, opts, training=False)
    report = ExperimentReport()

    def stack_score(vectors):
        model = fit(vectors, layout, opts)
        final = finalize(predict(model, te_v, opts.threshold), te, opts)
        return score(final, te.key, opts.mode)

    if compare:
        report.add("main", "stacking", stack_score(tr_v))
    if compare and baselines:
        report.add("main", "union", score_triples((c.key for c in union_ensemble(te_c)), te.key, opts.mode))
        k_learn = learn_threshold(tr_c, tr.key, opts.mode)
        report.add("main", f"voting_learned_k{k_learn}",
                   score_triples((c.key for c in voting_ensemble(te_c, k_learn)), te.key, opts.mode))
        k_best, curve = oracle_threshold(te_c, te.key, opts.mode)
        row = curve.rows[k_best - 1]
        report.rows.append(ExperimentRow("main", f"voting_oracle_k{k_best}", row[1], row[2], row[3]))
        best = max(((r.run_id, score(r.lines, te.key, opts.mode)) for r in te.runs), key=lambda t: (t[1].f1, t[0]))
        report.add("main", f"best_single_{best[0]}", best[1])

    if learning_curve:
        qids = sorted({v.candidate.query_id for v in tr_v})
        rng = np.random.default_rng(opts.seed)
        order = list(rng.permutation(len(qids)))
        for frac in learning_curve:
            keep = {qids[i] for i in order[:max(1, int(round(frac * len(qids))))]}
            sub = [v for v in tr_v if v.candidate.query_id in keep]
            report.add(f"fraction={frac:g}", "stacking", stack_score(sub))

    if incremental:
        judged = {e.key: e.judgment for e in tr.key}
        fp = {s: 0 for s in roster}
        for c in tr_c:
            if judged.get(c.key) is not Judgment.CORRECT:
                for s in c.responses:
                    fp[s] += 1
        pool: set = set()
        for step, sid in enumerate(sorted(roster, key=lambda s: (-fp[s], s)), 1):
            pool.add(sid)
            sub = [v for v in tr_v if set(v.candidate.responses) & pool]
            try:
                rep = stack_score(_restrict(sub, pool, layout))
            except ValueError as e:  # single-class training pool
                log.warning("incremental step %d has no usable model: %s", step, e)
                report.rows.append(ExperimentRow(f"systems={step}", f"stacking+{sid}", nan, nan, nan))
                continue
            report.add(f"systems={step}", f"stacking+{sid}", rep)

    report.seconds = time.perf_counter() - t0
    return report


def _restrict(vectors, pool, layout):
    """Training vectors seen through only the systems in ``pool``.

    Candidates are rebuilt from the pooled systems' responses and re-featurized
    against the full layout, so absent systems contribute zeros.
    """
    cands = []
    for v in vectors:
        c = v.candidate
        resp = {s: r for s, r in c.responses.items() if s in pool}
        cands.append(type(c)(c.query_id, c.slot, c.fill_norm, resp, c.label))
    return featurize(cands, layout, training=True)


def seed_sweep(cfg: GeneratorConfig, seeds: Sequence[int], opts_by_name: dict[str, PipelineOptions]):
    """Per seed, test F1 for several stacker option sets plus the reference baselines."""
    out = []
    for seed in seeds:
        c = replace(cfg, seed=seed)
        bundles = generate(c)
        row = {"seed": seed}
        for i, (name, opts) in enumerate(opts_by_name.items()):
            t0 = time.perf_counter()
            rep = run_experiment(c, opts, bundles=bundles, baselines=(i == 0))
            row[name] = rep.f1("stacking")
            row[f"{name}_seconds"] = time.perf_counter() - t0
            if i == 0:
                for r in rep.rows:
                    if r.method.startswith("voting_oracle"):
                        row["oracle_voting"] = r.f1
                    elif r.method.startswith("best_single"):
                        row["best_single"] = r.f1
                    elif r.method.startswith("voting_learned"):
                        row["learned_voting"] = r.f1
                    elif r.method == "union":
                        row["union"] = r.f1
        out.append(row)
    return out
