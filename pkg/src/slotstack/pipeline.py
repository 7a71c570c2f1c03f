"""End-to-end stacking pipeline shared by the CLI stages and experiments.

Each stage function here is what the matching CLI subcommand runs, so
running the stages by hand reproduces ``pipeline`` exactly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .aggregate import UNSUP_RUN_ID, BudgetTable, build_unsupervised_ensemble, combine_by_team, estimate_budgets
from .ingest import (
    AliasTable, CorpusIndex, RunFile, build_corpus_index, load_alias_table, load_runs, parse_key, parse_queries,
)
from .meta import (
    FeatureLayout, FeatureVector, LinearModel, Prediction, featurize, label_candidates, predict, train, tune_lambda,
)
from .model import Candidate, KeyEntry, Query, ResponseLine, group_candidates
from .postprocess import postprocess, to_run_lines
from .scorer import ScoreReport, score
from .similarity import TfidfModel
from .slots import DEFAULT_SLOT_CLASSES, load_slot_classes

log = logging.getLogger(__name__)


@dataclass
class PipelineOptions:
    features: tuple[str, ...] = ("CONF", "DPS", "OP", "REL")
    lam: float = 0.01
    threshold: float = 0.5
    loss: str = "logistic"
    standardize: bool = False
    tune: bool = False
    seed: int = 0
    mode: str = "official"
    combine_teams: bool = True
    dps_reduce: str = "max"
    op_reduce: str = "mean"
    smooth_idf: bool = False
    sublinear_tf: bool = False
    run_id: str = "STACKED"


@dataclass
class YearData:
    """Everything known about one evaluation year."""

    runs: list[RunFile]
    queries: list[Query] = field(default_factory=list)
    key: Optional[list[KeyEntry]] = None
    index: Optional[CorpusIndex] = None
    budgets: Optional[BudgetTable] = None
    aliases: Optional[AliasTable] = None
    slot_classes: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_SLOT_CLASSES))

    @classmethod
    def load(cls, directory, *, runs_dir=None, queries=None, key=None, corpus=None, budgets=None,
             aliases=None, slot_classes=None, roster_map=None, strict=False, fmt="2014", jobs=1,
             need_corpus=True) -> "YearData":
        """Load a bundle directory; explicit paths override the conventional file names."""
        d = Path(directory) if directory is not None else None

        def pick(explicit, name):
            if explicit is not None:
                return Path(explicit)
            if d is not None and (d / name).exists():
                return d / name
            return None

        rdir = pick(runs_dir, "runs")
        if rdir is None:
            raise FileNotFoundError("no runs directory given")
        qp, kp, cp = pick(queries, "queries.xml"), pick(key, "key.tsv"), pick(corpus, "corpus")
        bp, ap, sp = pick(budgets, "budgets.tsv"), pick(aliases, "aliases.tsv"), pick(slot_classes, "slot_classes.tsv")
        return cls(
            runs=load_runs(rdir, strict=strict, fmt=fmt, roster=roster_map, jobs=jobs),
            queries=parse_queries(qp) if qp else [],
            key=parse_key(kp) if kp else None,
            index=build_corpus_index(cp) if (cp and need_corpus) else None,
            budgets=BudgetTable.read(bp) if bp else None,
            aliases=load_alias_table(ap) if ap else None,
            slot_classes=load_slot_classes(sp) if sp else dict(DEFAULT_SLOT_CLASSES),
        )

    @property
    def query_map(self) -> dict[str, Query]:
        return {q.id: q for q in self.queries}


def team_runs(year: YearData, opts: PipelineOptions) -> list[RunFile]:
    return combine_by_team(year.runs) if opts.combine_teams else list(year.runs)


def default_roster(train: YearData, test: YearData, opts: PipelineOptions) -> list[str]:
    """Systems with history: those present in both years, plus the unsupervised ensemble if needed."""
    a = {r.run_id for r in team_runs(train, opts)}
    b = {r.run_id for r in team_runs(test, opts)}
    roster = sorted(a & b)
    if (a | b) - set(roster):
        roster.append(UNSUP_RUN_ID)
    return roster


def system_lines(year: YearData, roster: Sequence[str], opts: PipelineOptions,
                 budgets: Optional[BudgetTable] = None) -> list[ResponseLine]:
    """Response lines seen by the stacker: roster systems plus the unsupervised ensemble."""
    runs = team_runs(year, opts)
    sup = [r for r in runs if r.run_id in roster]
    lines = [l for r in sup for l in r.lines]
    unsup = [r for r in runs if r.run_id not in roster]
    if UNSUP_RUN_ID in roster:
        if budgets is None:
            budgets = year.budgets or BudgetTable({})
        lines += build_unsupervised_ensemble(unsup, budgets).lines
    elif unsup:
        log.info("ignoring %d runs outside the roster: %s", len(unsup), [r.run_id for r in unsup])
    return lines


def year_candidates(year: YearData, roster: Sequence[str], opts: PipelineOptions,
                    budgets: Optional[BudgetTable] = None) -> list[Candidate]:
    cands = group_candidates(system_lines(year, roster, opts, budgets))
    if year.key is not None:
        cands = label_candidates(cands, year.key)
    return cands


def make_layout(train_cands: Sequence[Candidate], roster: Sequence[str], opts: PipelineOptions) -> FeatureLayout:
    relations = tuple(sorted({c.slot for c in train_cands})) if "REL" in opts.features else ()
    return FeatureLayout(tuple(roster), tuple(opts.features), relations)


def featurize_year(cands: Sequence[Candidate], layout: FeatureLayout, year: YearData,
                   opts: PipelineOptions, training: bool) -> list[FeatureVector]:
    tfidf = None
    if year.index is not None and any(g in layout.groups for g in ("QSIM", "PSIM")):
        tfidf = TfidfModel(year.index, smooth=opts.smooth_idf, sublinear_tf=opts.sublinear_tf)
    return featurize(cands, layout, queries=year.query_map, index=year.index, tfidf=tfidf,
                     training=training, dps_reduce=opts.dps_reduce, op_reduce=opts.op_reduce)


def fit(vectors: Sequence[FeatureVector], layout: FeatureLayout, opts: PipelineOptions) -> LinearModel:
    lam = opts.lam
    if opts.tune:
        lam = tune_lambda(vectors, layout, seed=opts.seed, loss=opts.loss, standardize=opts.standardize)
        log.info("tuned lambda = %g", lam)
    return train(vectors, layout, lam, loss=opts.loss, standardize=opts.standardize)


def finalize(preds: Sequence[Prediction], year: YearData, opts: PipelineOptions) -> list[ResponseLine]:
    kept = postprocess(preds, year.aliases, year.slot_classes)
    return to_run_lines(kept, opts.run_id, year.queries or None)


@dataclass
class PipelineResult:
    roster: list[str]
    layout: FeatureLayout
    model: LinearModel
    train_vectors: list[FeatureVector]
    test_vectors: list[FeatureVector]
    predictions: list[Prediction]
    final_lines: list[ResponseLine]
    report: Optional[ScoreReport]


def run_pipeline(train_year: YearData, test_year: YearData, opts: PipelineOptions,
                 roster: Optional[Sequence[str]] = None) -> PipelineResult:
    roster = list(roster) if roster is not None else default_roster(train_year, test_year, opts)
    budgets = resolve_budgets(train_year, roster, opts)
    train_cands = year_candidates(train_year, roster, opts, budgets)
    layout = make_layout(train_cands, roster, opts)
    train_vecs = featurize_year(train_cands, layout, train_year, opts, training=True)
    model = fit(train_vecs, layout, opts)
    test_cands = year_candidates(test_year, roster, opts, budgets)
    test_vecs = featurize_year(test_cands, layout, test_year, opts, training=False)
    preds = predict(model, test_vecs, opts.threshold)
    final = finalize(preds, test_year, opts)
    report = score(final, test_year.key, opts.mode, test_year.aliases) if test_year.key is not None else None
    return PipelineResult(roster, layout, model, train_vecs, test_vecs, preds, final, report)


def resolve_budgets(train_year: YearData, roster: Sequence[str], opts: PipelineOptions) -> Optional[BudgetTable]:
    """Budgets for the unsupervised ensemble: the training year's table, else estimated from it."""
    if UNSUP_RUN_ID not in roster:
        return None
    if train_year.budgets is not None:
        return train_year.budgets
    if train_year.key is None:
        return BudgetTable({})
    lines = [l for r in train_year.runs for l in r.lines]
    return estimate_budgets(train_year.key, lines, train_year.queries or None)
