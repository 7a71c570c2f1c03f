"""Seeded synthetic multi-system slot-filling benchmark.

Two bundles ("years") share the same system identities but use fresh
queries, mirroring a train-on-last-year / test-on-this-year protocol.  Each
system finds each gold fill with probability equal to its recall and adds
distractor fills so that its expected precision matches its configured
precision.  Distractors come from a small per-key vocabulary with skewed
popularity, so systems sometimes agree on the same wrong answer.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import BudgetTable, estimate_budgets
from .ingest import RunFile, write_key, write_queries, write_run_file
from .model import (
    Judgment, KeyEntry, Origin, Provenance, Query, ResponseLine, group_candidates, normalize_fill,
)
from .slots import EntityType, is_single, slots_for


def _lin(a, b, n):
    return tuple(float(round(v, 6)) for v in np.linspace(a, b, n))


@dataclass
class GeneratorConfig:
    seed: int = 0
    n_systems: int = 8
    n_train_queries: int = 1000
    n_test_queries: int = 1000
    slots_per_query: int = 4
    precisions: tuple = _lin(0.35, 0.80, 8)
    recalls: tuple = _lin(0.55, 0.25, 8)
    alpha: float = 0.7
    sigma: float = 3.0
    calibration_noise: float = 0.3
    corpus_size: int = 200
    n_distractors: int = 5
    distractor_skew: float = 1.5
    distractor_doc_agreement: float = 0.3
    max_list_fills: int = 3
    docs_per_entity: int = 3
    doc_chars: int = 2000
    n_unsup_systems: int = 0
    runs_per_team: int = 1
    years: tuple = ("A", "B")

    def __post_init__(self):
        self.precisions = tuple(float(p) for p in self.precisions)
        self.recalls = tuple(float(r) for r in self.recalls)
        self.years = tuple(self.years)
        self.validate()

    def validate(self):
        if self.n_systems < 1 or self.n_train_queries < 1 or self.n_test_queries < 1:
            raise ValueError("need at least one system and one query per bundle")
        if len(self.precisions) != self.n_systems or len(self.recalls) != self.n_systems:
            raise ValueError("precisions and recalls need one entry per system")
        if not all(0 < p < 1 for p in self.precisions):
            raise ValueError("precisions must lie in (0, 1)")
        if not all(0 <= r < 1 for r in self.recalls):
            raise ValueError("recalls must lie in [0, 1)")
        for name in ("alpha", "calibration_noise", "distractor_doc_agreement"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.sigma < 0 or self.slots_per_query < 1 or self.n_distractors < 1:
            raise ValueError("sigma >= 0, slots_per_query >= 1 and n_distractors >= 1 required")
        if self.max_list_fills < 1 or self.docs_per_entity < 1 or self.runs_per_team < 1:
            raise ValueError("max_list_fills, docs_per_entity and runs_per_team must be >= 1")
        if self.n_unsup_systems < 0 or self.corpus_size < 0:
            raise ValueError("counts must be non-negative")
        if len(self.years) != 2 or self.years[0] == self.years[1]:
            raise ValueError("need two distinct bundle names")
        if self.doc_chars < 200:
            raise ValueError("doc_chars must be >= 200")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GeneratorConfig":
        return cls(**json.loads(text))


@dataclass
class Bundle:
    name: str
    queries: list[Query]
    runs: list[RunFile]
    key: list[KeyEntry]
    corpus: dict[str, str]
    budgets: BudgetTable = field(default_factory=lambda: BudgetTable({}))

    @property
    def lines(self) -> list[ResponseLine]:
        return [l for r in self.runs for l in r.lines]

    def write(self, directory) -> None:
        d = Path(directory)
        (d / "runs").mkdir(parents=True, exist_ok=True)
        (d / "corpus").mkdir(exist_ok=True)
        for r in self.runs:
            (d / "runs" / f"{r.run_id}.tsv").write_bytes(write_run_file(r.lines))
        (d / "queries.xml").write_bytes(write_queries(self.queries))
        (d / "key.tsv").write_bytes(write_key(self.key))
        for doc, text in self.corpus.items():
            (d / "corpus" / f"{doc}.txt").write_text(text, encoding="utf-8")
        self.budgets.write(d / "budgets.tsv")


@dataclass
class _System:
    run_id: str
    precision: float
    recall: float
    noise: float


def system_ids(cfg: GeneratorConfig) -> list[str]:
    return [f"sys{i + 1:02d}" for i in range(cfg.n_systems)]


def generate(cfg: GeneratorConfig) -> tuple[Bundle, Bundle]:
    """Build the (train, test) bundle pair; fully determined by ``cfg``."""
    cfg.validate()
    ss = np.random.SeedSequence(cfg.seed)
    child_train, child_test = ss.spawn(2)
    sup = []
    for i, team in enumerate(system_ids(cfg)):
        for k in range(cfg.runs_per_team):
            sup.append(_System(f"{team}_{k + 1}", cfg.precisions[i], cfg.recalls[i], cfg.calibration_noise))
    out = []
    for year, child, nq in ((cfg.years[0], child_train, cfg.n_train_queries),
                            (cfg.years[1], child_test, cfg.n_test_queries)):
        rng = np.random.default_rng(child)
        unsup = []
        for j in range(cfg.n_unsup_systems):
            unsup.append(_System(f"new{year.lower()}{j + 1:02d}_1",
                                 float(rng.uniform(min(cfg.precisions), max(cfg.precisions))),
                                 float(rng.uniform(min(cfg.recalls), max(cfg.recalls))),
                                 cfg.calibration_noise))
        out.append(_generate_bundle(cfg, year, nq, sup + unsup, rng))
    return out[0], out[1]


_GENERAL = [f"w{i}" for i in range(400)]


def _text(rng, n_tokens, topic, topic_share):
    n_topic = int(round(n_tokens * topic_share)) if topic else 0
    toks = list(rng.choice(_GENERAL, size=n_tokens - n_topic))
    if n_topic:
        toks += list(rng.choice(topic, size=n_topic))
    rng.shuffle(toks)
    return " ".join(toks) + "\n"


def _jitter(rng, span, sigma, limit):
    s, e = span
    if sigma > 0:
        s += int(round(rng.normal(0, sigma)))
        e += int(round(rng.normal(0, sigma)))
    s = min(max(s, 0), limit)
    e = min(max(e, s), limit)
    return (s, e)


def _random_span(rng, limit):
    s = int(rng.integers(0, limit - 60))
    return (s, s + int(rng.integers(4, 40)))


def _generate_bundle(cfg, year, n_queries, systems, rng) -> Bundle:
    width = max(4, len(str(n_queries)))
    corpus: dict[str, str] = {}
    background = [f"{year}_BG{i:05d}" for i in range(cfg.corpus_size)]
    for doc in background:
        corpus[doc] = _text(rng, 80, None, 0.0)
    limit = cfg.doc_chars - 1

    queries = []
    key: dict[tuple, KeyEntry] = {}
    found: set = set()
    lines: dict[str, list[ResponseLine]] = {s.run_id: [] for s in systems}
    zipf = 1.0 / np.arange(1, cfg.n_distractors + 1) ** cfg.distractor_skew
    zipf /= zipf.sum()

    for qn in range(n_queries):
        qid = f"{year}_Q{qn + 1:0{width}d}"
        etype = EntityType.PER if rng.random() < 0.5 else EntityType.ORG
        topic = [f"e{year.lower()}{qn}t{k}" for k in range(12)]
        qdoc = f"{qid}_query"
        corpus[qdoc] = _text(rng, 80, topic, 0.3)
        edocs = [f"{qid}_doc{k}" for k in range(cfg.docs_per_entity)]
        for doc in edocs:
            corpus[doc] = _text(rng, 80, topic, 0.3)
        pool = slots_for(etype)
        slots = sorted(rng.choice(pool, size=min(cfg.slots_per_query, len(pool)), replace=False).tolist())
        queries.append(Query(qid, f"Entity {qid}", etype, qdoc, (0, 10), tuple(slots)))

        for slot in slots:
            n_gold = 1 if is_single(slot) else int(rng.integers(1, cfg.max_list_fills + 1))
            gold = []
            for g in range(n_gold):
                canon_doc = edocs[int(rng.integers(len(edocs)))]
                gold.append((f"Answer {g + 1} for {qid} {slot}", canon_doc, _random_span(rng, limit)))
            distractors = []
            for k in range(cfg.n_distractors):
                ddoc = edocs[int(rng.integers(len(edocs)))] if rng.random() < 0.5 else \
                    background[int(rng.integers(len(background)))] if background else edocs[0]
                distractors.append((f"Wrong {k + 1} for {qid} {slot}", ddoc, _random_span(rng, limit)))

            for sysm in systems:
                out = lines[sysm.run_id]
                for fill, cdoc, cspan in gold:
                    if rng.random() >= sysm.recall:
                        continue
                    if rng.random() < cfg.alpha:
                        doc, span = cdoc, _jitter(rng, cspan, cfg.sigma, limit)
                    else:
                        doc = _other_doc(rng, cdoc, edocs, background)
                        span = _random_span(rng, limit)
                    conf = _confidence(rng, True, sysm.noise)
                    out.append(_line(rng, qid, slot, sysm.run_id, fill, doc, span, conf, limit))
                    found.add((qid, slot, fill))
                # a zero-recall system still answers, as if recall were 1, but only wrongly
                mean_wrong = (sysm.recall or 1.0) * n_gold * (1.0 - sysm.precision) / sysm.precision
                n_wrong = min(int(rng.poisson(mean_wrong)), cfg.n_distractors)
                if n_wrong:
                    picks = rng.choice(cfg.n_distractors, size=n_wrong, replace=False, p=zipf)
                    for k in sorted(picks.tolist()):
                        fill, ddoc, dspan = distractors[k]
                        if rng.random() < cfg.distractor_doc_agreement:
                            doc, span = ddoc, _jitter(rng, dspan, cfg.sigma, limit)
                        else:
                            doc = _other_doc(rng, ddoc, edocs, background)
                            span = _random_span(rng, limit)
                        conf = _confidence(rng, False, sysm.noise)
                        out.append(_line(rng, qid, slot, sysm.run_id, fill, doc, span, conf, limit))
                        e = KeyEntry(qid, slot, normalize_fill(fill), Judgment.WRONG, Origin.POOLED)
                        key[e.key] = e
            for fill, _, _ in gold:
                origin = Origin.POOLED if (qid, slot, fill) in found else Origin.MANUAL
                e = KeyEntry(qid, slot, normalize_fill(fill), Judgment.CORRECT, origin)
                key[e.key] = e

    runs = []
    for s in systems:
        ls = sorted(lines[s.run_id], key=lambda l: (l.query_id, l.slot, l.fill_norm))
        runs.append(RunFile(s.run_id, s.run_id.split("_", 1)[0], ls))
    key_list = sorted(key.values(), key=lambda e: e.key)
    all_lines = [l for r in runs for l in r.lines]
    budgets = estimate_budgets(key_list, all_lines, queries)
    return Bundle(year, queries, runs, key_list, dict(sorted(corpus.items())), budgets)


def _other_doc(rng, avoid, edocs, background):
    choices = [d for d in edocs if d != avoid] + background[:50]
    if not choices:
        return avoid
    return choices[int(rng.integers(len(choices)))]


def _confidence(rng, correct: bool, noise: float) -> float:
    signal = rng.beta(4.0, 1.5) if correct else rng.beta(1.5, 3.0)
    u = rng.random()
    return float(round((1.0 - noise) * signal + noise * u, 6))


def _line(rng, qid, slot, run_id, fill, doc, span, conf, limit) -> ResponseLine:
    rel = (max(0, span[0] - int(rng.integers(0, 60))), min(limit, span[1] + int(rng.integers(0, 60))))
    return ResponseLine(qid, slot, run_id, Provenance(doc, (rel,)), fill, Provenance(doc, (span,)), conf)


def realized_rates(bundle: Bundle) -> dict[str, tuple[float, float]]:
    """Per run: (precision, recall) measured against the bundle's full key."""
    correct = {e.key for e in bundle.key if e.judgment is Judgment.CORRECT}
    out = {}
    for r in bundle.runs:
        got = {c.key for c in group_candidates(r.lines)}
        tp = len(got & correct)
        out[r.run_id] = (tp / len(got) if got else 0.0, tp / len(correct) if correct else 0.0)
    return out
